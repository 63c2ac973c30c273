#include "synflood/defense.hpp"

#include <algorithm>

namespace synflood {

std::string node_mode_name(NodeMode m) {
    return m == NodeMode::Monitor ? "MONITOR" : "DELEGATE";
}

void DefenseConfig::validate() const {
    if (quiet_windows == 0)
        throw std::invalid_argument("quiet_windows must be positive");
    if (parametric_enabled && !profile)
        throw std::invalid_argument("parametric detector requires a profile");
    if (block_ttl <= 0)
        throw std::invalid_argument("block_ttl must be positive");
}

OutputAction OutputAction::forward(PacketRecord p) {
    return {Kind::Forward, std::move(p), {}, {}, 0};
}
OutputAction OutputAction::reply(PacketRecord p) {
    return {Kind::Reply, std::move(p), {}, {}, 0};
}
OutputAction OutputAction::drop(std::string reason) {
    return {Kind::Drop, {}, std::move(reason), {}, 0};
}
OutputAction OutputAction::server_open(ConnKey k, uint32_t mss) {
    return {Kind::ServerOpen, {}, {}, k, mss};
}

DefenseNode::DefenseNode(DefenseConfig config)
    : config_(std::move(config)),
      mode_(config_.initial_mode),
      windows_(config_.detectors.window_len),
      ratio_(config_.detectors.rho, config_.detectors.min_syn),
      srccount_(config_.detectors.growth_factor, config_.detectors.baseline_n) {
    config_.validate();
    if (config_.parametric_enabled)
        parametric_ = std::make_unique<ParametricDetector>(
            *config_.profile, config_.detectors.k, config_.detectors.std_floor,
            config_.detectors.epoch_offset);
}

bool DefenseNode::is_blocked(uint32_t ip, double now) const {
    auto it = blocklist_.find(ip);
    return it != blocklist_.end() && it->second > now;
}

std::vector<OutputAction> DefenseNode::process(const PacketRecord& pkt, double now) {
    if (is_blocked(pkt.src_ip, now)) {
        ++stats_.blocked;
        return {OutputAction::drop(drop::kBlocked)};
    }
    if (pkt.proto != Proto::Tcp) {
        ++stats_.forwarded;
        return {OutputAction::forward(pkt)};
    }

    Verdict verdict = classify_header(pkt);
    if (verdict.legal())
        verdict = classify_flags(pkt.flags, ConnPhase::Any);
    if (!verdict.legal()) {
        ++stats_.dropped_classify;
        ++flagscan_in_window_;
        return {OutputAction::drop(verdict.reason)};
    }

    if (mode_ == NodeMode::Monitor) {
        ++stats_.forwarded;
        return {OutputAction::forward(pkt)};
    }

    // Delegation: no SYN reaches the server unvalidated.
    ConnKey key = key_of(pkt);
    if (pkt.flags == FlagSet(kFlagSyn)) {
        uint32_t isn = cookie_encode(config_.cookie, key,
                                     cookie_counter(config_.cookie, now), kDefaultMssIdx);
        PacketRecord synack;
        synack.ts = now;
        synack.proto = Proto::Tcp;
        synack.src_ip = pkt.dst_ip;
        synack.dst_ip = pkt.src_ip;
        synack.sport = pkt.dport;
        synack.dport = pkt.sport;
        synack.flags = FlagSet(kFlagSyn | kFlagAck);
        synack.seq = isn;
        synack.ackno = pkt.seq + 1;
        synack.label = pkt.label;
        ++stats_.delegated;
        return {OutputAction::reply(synack)};
    }
    if (validated_.contains(key) || validated_.contains(key.reversed())) {
        ++stats_.forwarded;
        return {OutputAction::forward(pkt)};
    }
    if (pkt.flags == FlagSet(kFlagAck)) {
        CookieCheck check = cookie_validate(config_.cookie, key, pkt.ackno, now);
        if (check.status == CookieCheck::Status::Valid) {
            validated_.insert(key);
            ++stats_.validated;
            return {OutputAction::server_open(key, check.mss)};
        }
        ++stats_.dropped_bad_cookie;
        return {OutputAction::drop(drop::kBadCookie)};
    }
    return {OutputAction::drop(drop::kNoFlow)};
}

std::vector<Alert> DefenseNode::close_window(const RateWindow& w) {
    std::vector<Alert> raised;
    if (config_.ratio_enabled)
        if (auto a = ratio_.step(w)) raised.push_back(std::move(*a));
    if (config_.srccount_enabled)
        if (auto a = srccount_.step(w)) raised.push_back(std::move(*a));
    if (config_.parametric_enabled)
        if (auto a = parametric_->step(w)) raised.push_back(std::move(*a));
    if (flagscan_in_window_ >= config_.flag_scan_min && config_.flag_scan_min > 0)
        raised.push_back(Alert{"FLAG_SCAN", w.window_end(), w.window_start, w.window_end(),
                               static_cast<double>(flagscan_in_window_),
                               static_cast<double>(config_.flag_scan_min), {}, Severity::Attack});
    flagscan_in_window_ = 0;

    if (raised.empty()) {
        if (mode_ == NodeMode::Delegate && ++quiet_streak_ >= config_.quiet_windows) {
            mode_ = NodeMode::Monitor;
            quiet_streak_ = 0;
        }
    } else {
        quiet_streak_ = 0;
        for (const auto& a : raised) {
            on_alert(a, a.t_raised);
            peer_outbox_.push_back(a);
        }
    }
    return raised;
}

std::vector<Alert> DefenseNode::observe(const PacketRecord& pkt) {
    std::vector<Alert> raised;
    for (const auto& w : windows_.feed(pkt)) {
        auto alerts = close_window(w);
        raised.insert(raised.end(), std::make_move_iterator(alerts.begin()),
                      std::make_move_iterator(alerts.end()));
    }
    return raised;
}

AlertReport DefenseNode::on_alert(const Alert& alert, double now) {
    AlertReport report;
    if (alert.t_raised < last_alert_t_) {
        report.stale = true;
        report.mode = mode_;
        return report;
    }
    last_alert_t_ = alert.t_raised;
    if (alert.severity == Severity::Attack) {
        if (mode_ == NodeMode::Monitor) {
            mode_ = NodeMode::Delegate;
            report.mode_changed = true;
        }
        for (uint32_t ip : alert.suspected_sources) {
            auto [it, inserted] = blocklist_.insert_or_assign(ip, now + config_.block_ttl);
            if (inserted) ++report.sources_added;
        }
    } else {
        ++stats_.warn_alerts_seen;
    }
    report.mode = mode_;
    return report;
}

void DefenseNode::expire_blocklist(double now) {
    std::erase_if(blocklist_, [now](const auto& kv) { return kv.second <= now; });
}

std::vector<Alert> DefenseNode::tick(double now) {
    std::vector<Alert> raised;
    for (const auto& w : windows_.close_until(now)) {
        auto alerts = close_window(w);
        raised.insert(raised.end(), std::make_move_iterator(alerts.begin()),
                      std::make_move_iterator(alerts.end()));
    }
    expire_blocklist(now);
    return raised;
}

std::vector<Alert> DefenseNode::finish() {
    if (auto w = windows_.finish())
        return close_window(*w);
    return {};
}

}  // namespace synflood
