#include "synflood/detect.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

namespace synflood {

using ordered_json = nlohmann::ordered_json;

std::string severity_name(Severity s) {
    return s == Severity::Warn ? "WARN" : "ATTACK";
}

std::string render_alert(const Alert& alert) {
    ordered_json j;
    j["detector"] = alert.detector;
    j["t"] = alert.t_raised;
    j["w_start"] = alert.w_start;
    j["w_end"] = alert.w_end;
    j["metric"] = alert.metric;
    j["threshold"] = alert.threshold;
    auto sources = ordered_json::array();
    for (uint32_t ip : alert.suspected_sources)
        sources.push_back(ip_to_string(ip));
    j["sources"] = sources;
    j["severity"] = severity_name(alert.severity);
    return j.dump();
}

Alert parse_alert(const std::string& line) {
    ordered_json j = ordered_json::parse(line);
    Alert a;
    a.detector = j.at("detector").get<std::string>();
    a.t_raised = j.at("t").get<double>();
    a.w_start = j.at("w_start").get<double>();
    a.w_end = j.at("w_end").get<double>();
    a.metric = j.at("metric").get<double>();
    a.threshold = j.at("threshold").get<double>();
    for (const auto& s : j.at("sources"))
        a.suspected_sources.push_back(parse_ip(s.get<std::string>()));
    std::string sev = j.at("severity").get<std::string>();
    if (sev == "WARN")
        a.severity = Severity::Warn;
    else if (sev == "ATTACK")
        a.severity = Severity::Attack;
    else
        throw std::invalid_argument("unknown severity: " + sev);
    return a;
}

std::string render_alerts(const std::vector<Alert>& alerts) {
    std::string out;
    for (const auto& a : alerts) {
        out += render_alert(a);
        out += '\n';
    }
    return out;
}

std::vector<Alert> parse_alerts(const std::string& text) {
    std::vector<Alert> alerts;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        if (end > pos)
            alerts.push_back(parse_alert(text.substr(pos, end - pos)));
        pos = end + 1;
    }
    return alerts;
}

WindowAccumulator::WindowAccumulator(double window_len) : window_len_(window_len) {
    if (window_len <= 0)
        throw std::invalid_argument("window_len must be positive");
}

std::vector<RateWindow> WindowAccumulator::feed(const PacketRecord& pkt) {
    std::vector<RateWindow> closed;
    if (!started_) {
        started_ = true;
        current_ = RateWindow{};
        current_.window_start = pkt.ts;
        current_.window_len = window_len_;
    }
    while (pkt.ts >= current_.window_end()) {
        closed.push_back(std::move(current_));
        current_ = RateWindow{};
        current_.window_start = closed.back().window_end();
        current_.window_len = window_len_;
    }
    if (pkt.proto == Proto::Tcp) {
        if (pkt.flags == FlagSet(kFlagSyn)) {
            ++current_.syn_count;
            current_.sources.insert(pkt.src_ip);
        }
        if (pkt.flags.fin() || pkt.flags.rst())
            ++current_.finrst_count;
    }
    return closed;
}

std::vector<RateWindow> WindowAccumulator::close_until(double t) {
    std::vector<RateWindow> closed;
    if (!started_) return closed;
    while (current_.window_end() <= t) {
        closed.push_back(std::move(current_));
        current_ = RateWindow{};
        current_.window_start = closed.back().window_end();
        current_.window_len = window_len_;
    }
    return closed;
}

std::optional<RateWindow> WindowAccumulator::finish() {
    if (!started_) return std::nullopt;
    started_ = false;
    return std::move(current_);
}

std::vector<RateWindow> window_fold(const Trace& trace, double window_len) {
    if (trace.records.empty())
        throw EmptyTrace("window_fold on empty trace");
    WindowAccumulator acc(window_len);
    std::vector<RateWindow> windows;
    for (const auto& rec : trace.records) {
        auto closed = acc.feed(rec);
        windows.insert(windows.end(), std::make_move_iterator(closed.begin()),
                       std::make_move_iterator(closed.end()));
    }
    if (auto last = acc.finish())
        windows.push_back(std::move(*last));
    return windows;
}

size_t TimeOfDayProfile::bin_index(double time_of_day_seconds) const {
    double tod = std::fmod(time_of_day_seconds, 86400.0);
    if (tod < 0) tod += 86400.0;
    auto idx = static_cast<size_t>(tod / bin_len);
    return std::min(idx, bins.size() - 1);
}

std::string render_profile(const TimeOfDayProfile& profile) {
    ordered_json j;
    j["bin_len"] = profile.bin_len;
    auto bins = ordered_json::array();
    for (const auto& b : profile.bins)
        bins.push_back({{"mean", b.mean}, {"std", b.std}, {"n", b.n}});
    j["bins"] = bins;
    return j.dump();
}

TimeOfDayProfile parse_profile(const std::string& text) {
    ordered_json j = ordered_json::parse(text);
    TimeOfDayProfile p;
    p.bin_len = j.at("bin_len").get<double>();
    for (const auto& b : j.at("bins"))
        p.bins.push_back(
            {b.at("mean").get<double>(), b.at("std").get<double>(), b.at("n").get<uint64_t>()});
    size_t expected = static_cast<size_t>(86400.0 / p.bin_len);
    if (p.bins.size() != expected)
        throw std::invalid_argument("profile bins do not cover the day");
    return p;
}

TimeOfDayProfile train_profile(const Trace& trace, double bin_len, double epoch_offset) {
    if (bin_len <= 0 || std::fmod(86400.0, bin_len) != 0.0)
        throw std::invalid_argument("bin_len must divide 86400");
    std::vector<RateWindow> windows;
    try {
        windows = window_fold(trace, 1.0);
    } catch (const EmptyTrace&) {
        throw TraceTooShort("empty trace");
    }
    if (static_cast<double>(windows.size()) < bin_len)
        throw TraceTooShort("trace spans less than one full bin");

    TimeOfDayProfile profile;
    profile.bin_len = bin_len;
    size_t n_bins = static_cast<size_t>(86400.0 / bin_len);
    profile.bins.resize(n_bins);

    std::vector<std::vector<double>> samples(n_bins);
    for (const auto& w : windows) {
        size_t bin = profile.bin_index(w.window_start + epoch_offset);
        samples[bin].push_back(static_cast<double>(w.syn_count) / w.window_len);
    }
    for (size_t i = 0; i < n_bins; ++i) {
        const auto& xs = samples[i];
        auto& bin = profile.bins[i];
        bin.n = xs.size();
        if (xs.empty()) continue;
        bin.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
        if (xs.size() >= 2) {
            double ss = 0.0;
            for (double x : xs) ss += (x - bin.mean) * (x - bin.mean);
            bin.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
        }
    }
    return profile;
}

RatioDetector::RatioDetector(double rho, uint64_t min_syn) : rho_(rho), min_syn_(min_syn) {
    if (rho <= 1.0) throw std::invalid_argument("rho must exceed 1");
    if (min_syn < 1) throw std::invalid_argument("min_syn must be at least 1");
}

std::optional<Alert> RatioDetector::step(const RateWindow& w) {
    uint64_t denom = std::max<uint64_t>(w.finrst_count, 1);
    double metric = static_cast<double>(w.syn_count) / static_cast<double>(denom);
    if (w.syn_count >= min_syn_ && static_cast<double>(w.syn_count) > rho_ * static_cast<double>(denom))
        return Alert{"RATIO", w.window_end(), w.window_start, w.window_end(),
                     metric,  rho_,           {},             Severity::Attack};
    return std::nullopt;
}

SrcCountDetector::SrcCountDetector(double growth_factor, size_t baseline_n)
    : growth_factor_(growth_factor), baseline_n_(baseline_n) {
    if (growth_factor <= 1.0) throw std::invalid_argument("growth factor must exceed 1");
    if (baseline_n < 1) throw std::invalid_argument("baseline_n must be at least 1");
}

std::optional<Alert> SrcCountDetector::step(const RateWindow& w) {
    double count = static_cast<double>(w.sources.size());
    if (!baseline_.empty()) {
        double mean = std::accumulate(baseline_.begin(), baseline_.end(), 0.0) /
                      static_cast<double>(baseline_.size());
        if (count > growth_factor_ * std::max(mean, 1.0)) {
            Alert alert{"SRC_COUNT", w.window_end(), w.window_start,
                        w.window_end(), count,        growth_factor_ * std::max(mean, 1.0),
                        {},             Severity::Attack};
            alert.suspected_sources.assign(w.sources.begin(), w.sources.end());
            return alert;
        }
    }
    baseline_.push_back(count);
    if (baseline_.size() > baseline_n_) baseline_.pop_front();
    return std::nullopt;
}

ParametricDetector::ParametricDetector(const TimeOfDayProfile& profile, double k, double std_floor,
                                       double epoch_offset)
    : profile_(profile), k_(k), std_floor_(std_floor), epoch_offset_(epoch_offset) {}

std::optional<Alert> ParametricDetector::step(const RateWindow& w) {
    const auto& bin = profile_.bins[profile_.bin_index(w.window_start + epoch_offset_)];
    if (bin.n < 2)
        throw UntrainedBin("bin at t=" + std::to_string(w.window_start) +
                           " has fewer than 2 samples");
    double rate = static_cast<double>(w.syn_count) / w.window_len;
    double z = (rate - bin.mean) / std::max(bin.std, std_floor_);
    if (z > k_)
        return Alert{"PARAMETRIC", w.window_end(), w.window_start, w.window_end(),
                     z,            k_,             {},             Severity::Attack};
    return std::nullopt;
}

namespace {
template <typename Detector>
std::vector<Alert> run_detector(Detector det, const std::vector<RateWindow>& windows) {
    std::vector<Alert> alerts;
    for (const auto& w : windows)
        if (auto alert = det.step(w))
            alerts.push_back(std::move(*alert));
    return alerts;
}
}  // namespace

std::vector<Alert> detect_ratio(const std::vector<RateWindow>& windows, double rho,
                                uint64_t min_syn) {
    return run_detector(RatioDetector(rho, min_syn), windows);
}

std::vector<Alert> detect_srccount(const std::vector<RateWindow>& windows, double growth_factor,
                                   size_t baseline_n) {
    return run_detector(SrcCountDetector(growth_factor, baseline_n), windows);
}

std::vector<Alert> detect_parametric(const std::vector<RateWindow>& windows,
                                     const TimeOfDayProfile& profile, double k, double std_floor,
                                     double epoch_offset) {
    return run_detector(ParametricDetector(profile, k, std_floor, epoch_offset), windows);
}

}  // namespace synflood
