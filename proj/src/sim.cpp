#include "synflood/sim.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <random>

#include "json.hpp"
#include "synflood/util.hpp"

namespace synflood {

using ordered_json = nlohmann::ordered_json;

Cidr Cidr::parse(const std::string& text) {
    auto slash = text.find('/');
    if (slash == std::string::npos)
        throw ConfigInvalid("CIDR missing prefix length: " + text);
    uint32_t base;
    try {
        base = parse_ip(text.substr(0, slash));
    } catch (const std::invalid_argument& e) {
        throw ConfigInvalid(e.what());
    }
    int len;
    try {
        len = std::stoi(text.substr(slash + 1));
    } catch (const std::exception&) {
        throw ConfigInvalid("bad prefix length: " + text);
    }
    if (len < 1 || len > 32)
        throw ConfigInvalid("prefix length out of range: " + text);
    uint32_t mask = len == 32 ? 0xffffffffu : ~((1u << (32 - len)) - 1);
    return {base & mask, static_cast<uint32_t>(len)};
}

std::string Cidr::to_string() const {
    return ip_to_string(base) + "/" + std::to_string(prefix_len);
}

bool Cidr::contains(uint32_t ip) const {
    uint32_t mask = prefix_len == 32 ? 0xffffffffu : ~((1u << (32 - prefix_len)) - 1);
    return (ip & mask) == base;
}

uint32_t Cidr::host_count() const {
    return prefix_len == 32 ? 1 : (1u << (32 - prefix_len));
}

bool Cidr::overlaps(const Cidr& other) const {
    return contains(other.base) || other.contains(base);
}

void SimConfig::validate() const {
    if (duration <= 0) throw ConfigInvalid("duration must be positive");
    if (legit_rate < 0 || attack_rate < 0) throw ConfigInvalid("rates must be non-negative");
    if (attack_start < 0 || attack_start > attack_end)
        throw ConfigInvalid("attack window must satisfy 0 <= attack_start <= attack_end");
    if (attack_end > duration) throw ConfigInvalid("attack_end exceeds duration");
    if (spoof_pool.overlaps(legit_pool)) throw ConfigInvalid("spoof and legit pools overlap");
    if (spoof_pool.contains(attacker_ingress))
        throw ConfigInvalid("attacker ingress inside spoof pool");
    if (rtt < 0 || jitter < 0) throw ConfigInvalid("rtt and jitter must be non-negative");
    if (backlog == 0) throw ConfigInvalid("backlog must be positive");
    if (half_open_timeout <= 0) throw ConfigInvalid("half_open_timeout must be positive");
    if (legit_icmp_drop_rate < 0 || legit_icmp_drop_rate > 1)
        throw ConfigInvalid("legit_icmp_drop_rate must be in [0,1]");
    if (probe_timeout <= 0 || sweep_interval <= 0)
        throw ConfigInvalid("probe timings must be positive");
    if (measure_start < 0 || measure_start > duration)
        throw ConfigInvalid("measure_start outside [0, duration]");
    if (defense_enabled) {
        try {
            defense.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigInvalid(e.what());
        }
    }
}

namespace {

NodeMode parse_mode_name(const std::string& name) {
    if (name == "monitor") return NodeMode::Monitor;
    if (name == "delegate") return NodeMode::Delegate;
    throw ConfigInvalid("unknown node mode: " + name);
}

TrackMode parse_track_mode(const std::string& name) {
    if (name == "plain") return TrackMode::Plain;
    if (name == "cache") return TrackMode::Cache;
    if (name == "cookies") return TrackMode::Cookies;
    throw ConfigInvalid("unknown tracker mode: " + name);
}

std::pair<uint64_t, uint64_t> parse_secret_hex(const std::string& hex) {
    if (hex.size() != 32)
        throw ConfigInvalid("cookie secret must be 32 hex characters");
    auto half = [&](size_t off) {
        uint64_t v = 0;
        for (size_t i = 0; i < 16; ++i) {
            char c = hex[off + i];
            uint64_t d;
            if (c >= '0' && c <= '9') d = c - '0';
            else if (c >= 'a' && c <= 'f') d = 10 + (c - 'a');
            else if (c >= 'A' && c <= 'F') d = 10 + (c - 'A');
            else throw ConfigInvalid("cookie secret is not hex");
            v = (v << 4) | d;
        }
        return v;
    };
    return {half(0), half(16)};
}

}  // namespace

SimConfig parse_sim_config(const std::string& json_text) {
    ordered_json j;
    try {
        j = ordered_json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigInvalid(std::string("config is not valid JSON: ") + e.what());
    }
    SimConfig c;
    try {
        if (j.contains("duration")) c.duration = j["duration"].get<double>();
        if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
        if (j.contains("legit_rate")) c.legit_rate = j["legit_rate"].get<double>();
        if (j.contains("attack_rate")) c.attack_rate = j["attack_rate"].get<double>();
        if (j.contains("attack_start")) c.attack_start = j["attack_start"].get<double>();
        if (j.contains("attack_end")) c.attack_end = j["attack_end"].get<double>();
        if (j.contains("spoof_pool")) c.spoof_pool = Cidr::parse(j["spoof_pool"].get<std::string>());
        if (j.contains("legit_pool")) c.legit_pool = Cidr::parse(j["legit_pool"].get<std::string>());
        if (j.contains("rtt")) c.rtt = j["rtt"].get<double>();
        if (j.contains("jitter")) c.jitter = j["jitter"].get<double>();
        if (j.contains("backlog")) c.backlog = j["backlog"].get<size_t>();
        if (j.contains("half_open_timeout"))
            c.half_open_timeout = j["half_open_timeout"].get<double>();
        if (j.contains("tracker_mode"))
            c.tracker_mode = parse_track_mode(j["tracker_mode"].get<std::string>());
        if (j.contains("legit_icmp_drop_rate"))
            c.legit_icmp_drop_rate = j["legit_icmp_drop_rate"].get<double>();
        if (j.contains("router_origin_enabled"))
            c.router_origin_enabled = j["router_origin_enabled"].get<bool>();
        if (j.contains("probes_enabled")) c.probes_enabled = j["probes_enabled"].get<bool>();
        if (j.contains("probe_timeout")) c.probe_timeout = j["probe_timeout"].get<double>();
        if (j.contains("sweep_interval")) c.sweep_interval = j["sweep_interval"].get<double>();
        if (j.contains("epoch_offset")) c.epoch_offset = j["epoch_offset"].get<double>();
        if (j.contains("measure_start")) c.measure_start = j["measure_start"].get<double>();
        if (j.contains("constant_rate")) c.constant_rate = j["constant_rate"].get<bool>();
        if (j.contains("server_ip")) c.server_ip = parse_ip(j["server_ip"].get<std::string>());
        if (j.contains("server_port")) c.server_port = j["server_port"].get<uint16_t>();
        if (j.contains("attacker_ingress"))
            c.attacker_ingress = parse_ip(j["attacker_ingress"].get<std::string>());

        if (j.contains("defense")) {
            const auto& d = j["defense"];
            if (d.contains("enabled")) c.defense_enabled = d["enabled"].get<bool>();
            DefenseConfig& dc = c.defense;
            if (d.contains("initial_mode"))
                dc.initial_mode = parse_mode_name(d["initial_mode"].get<std::string>());
            if (d.contains("cookie_secret")) {
                auto [lo, hi] = parse_secret_hex(d["cookie_secret"].get<std::string>());
                dc.cookie.secret_lo = lo;
                dc.cookie.secret_hi = hi;
            }
            if (d.contains("block_ttl")) dc.block_ttl = d["block_ttl"].get<double>();
            if (d.contains("quiet_windows")) dc.quiet_windows = d["quiet_windows"].get<uint32_t>();
            if (d.contains("flag_scan_min")) dc.flag_scan_min = d["flag_scan_min"].get<uint64_t>();
            if (d.contains("window")) dc.detectors.window_len = d["window"].get<double>();
            if (d.contains("rho")) dc.detectors.rho = d["rho"].get<double>();
            if (d.contains("min_syn")) dc.detectors.min_syn = d["min_syn"].get<uint64_t>();
            if (d.contains("g")) dc.detectors.growth_factor = d["g"].get<double>();
            if (d.contains("baseline_n")) dc.detectors.baseline_n = d["baseline_n"].get<size_t>();
            if (d.contains("k")) dc.detectors.k = d["k"].get<double>();
            if (d.contains("std_floor")) dc.detectors.std_floor = d["std_floor"].get<double>();
            if (d.contains("detectors")) {
                dc.ratio_enabled = false;
                dc.srccount_enabled = false;
                dc.parametric_enabled = false;
                for (const auto& name : d["detectors"]) {
                    std::string n = name.get<std::string>();
                    if (n == "ratio") dc.ratio_enabled = true;
                    else if (n == "srccount") dc.srccount_enabled = true;
                    else if (n == "parametric") dc.parametric_enabled = true;
                    else throw ConfigInvalid("unknown detector: " + n);
                }
            }
            if (d.contains("profile_path"))
                dc.profile = parse_profile(read_file(d["profile_path"].get<std::string>()));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigInvalid(std::string("bad config field: ") + e.what());
    }
    c.defense.detectors.epoch_offset = c.epoch_offset;
    c.validate();
    return c;
}

std::string render_sim_config(const SimConfig& c) {
    ordered_json j;
    j["duration"] = c.duration;
    j["seed"] = c.seed;
    j["legit_rate"] = c.legit_rate;
    j["attack_rate"] = c.attack_rate;
    j["attack_start"] = c.attack_start;
    j["attack_end"] = c.attack_end;
    j["spoof_pool"] = c.spoof_pool.to_string();
    j["legit_pool"] = c.legit_pool.to_string();
    j["rtt"] = c.rtt;
    j["backlog"] = c.backlog;
    j["half_open_timeout"] = c.half_open_timeout;
    j["tracker_mode"] = c.tracker_mode == TrackMode::Plain    ? "plain"
                        : c.tracker_mode == TrackMode::Cache ? "cache"
                                                             : "cookies";
    j["legit_icmp_drop_rate"] = c.legit_icmp_drop_rate;
    j["router_origin_enabled"] = c.router_origin_enabled;
    j["probes_enabled"] = c.probes_enabled;
    j["probe_timeout"] = c.probe_timeout;
    j["sweep_interval"] = c.sweep_interval;
    j["epoch_offset"] = c.epoch_offset;
    j["measure_start"] = c.measure_start;
    j["constant_rate"] = c.constant_rate;
    j["server_ip"] = ip_to_string(c.server_ip);
    j["server_port"] = c.server_port;
    j["attacker_ingress"] = ip_to_string(c.attacker_ingress);
    j["defense"] = {{"enabled", c.defense_enabled}};
    return j.dump();
}

std::string render_metrics(const SimMetrics& m) {
    ordered_json j;
    j["legit_attempted"] = m.legit_attempted;
    j["legit_completed"] = m.legit_completed;
    j["legit_dropped_backlog"] = m.legit_dropped_backlog;
    j["legit_probe_aborted"] = m.legit_probe_aborted;
    j["legit_timed_out"] = m.legit_timed_out;
    j["legit_in_flight"] = m.legit_in_flight;
    j["attack_syns"] = m.attack_syns;
    j["attack_half_open_peak"] = m.attack_half_open_peak;
    j["completion_rate"] = m.completion_rate;
    j["measured_attempted"] = m.measured_attempted;
    j["measured_completed"] = m.measured_completed;
    if (m.first_alert_time)
        j["first_alert_time"] = *m.first_alert_time;
    else
        j["first_alert_time"] = nullptr;
    if (m.detection_delay)
        j["detection_delay"] = *m.detection_delay;
    else
        j["detection_delay"] = nullptr;
    j["alerts_by_detector"] = ordered_json::object();
    for (const auto& [k, v] : m.alerts_by_detector) j["alerts_by_detector"][k] = v;
    j["false_positives_by_detector"] = ordered_json::object();
    for (const auto& [k, v] : m.false_positives_by_detector)
        j["false_positives_by_detector"][k] = v;
    j["conservation_ok"] = m.conservation_ok;
    j["half_open_peak"] = m.half_open_peak;
    j["occupancy_ok"] = m.occupancy_ok;
    return j.dump();
}

namespace {

struct Rng {
    explicit Rng(uint64_t seed) : eng(seed) {}
    double uniform() { return static_cast<double>(eng() >> 11) * 0x1.0p-53; }
    double exp_gap(double rate) { return -std::log1p(-uniform()) / rate; }
    uint32_t u32() { return static_cast<uint32_t>(eng()); }
    std::mt19937_64 eng;
};

enum class Outcome : uint8_t { Pending, Completed, Dropped, ProbeAborted, TimedOut };

struct LegitConn {
    ConnKey key;
    uint32_t client_isn = 0;
    double arrival = 0.0;
    int attempts = 0;
    bool synack_received = false;
    bool echo_replies = true;
    Outcome outcome = Outcome::Pending;
};

struct ProbeInfo {
    uint64_t probe_id = 0;
    double synack_ts = 0.0;
    Label label = Label::Legit;
};

/// Per-detector false positives: alerts whose window contains zero
/// ATTACK-labeled packets. Degenerate (point) alerts check the second
/// preceding t_raised.
std::map<std::string, uint64_t> count_false_positives(const Trace& trace,
                                                      const std::vector<Alert>& alerts) {
    std::vector<double> attack_ts;
    for (const auto& rec : trace.records)
        if (rec.label == Label::Attack) attack_ts.push_back(rec.ts);
    std::sort(attack_ts.begin(), attack_ts.end());
    auto attack_in = [&](double lo, double hi) {
        auto it = std::lower_bound(attack_ts.begin(), attack_ts.end(), lo);
        return it != attack_ts.end() && *it < hi;
    };
    std::map<std::string, uint64_t> fp;
    for (const auto& a : alerts) {
        double lo = a.w_start, hi = a.w_end;
        if (hi <= lo) {
            lo = a.t_raised - 1.0;
            hi = a.t_raised + 1e-9;
        }
        if (!attack_in(lo, hi)) ++fp[a.detector];
    }
    return fp;
}

void finalize_alert_metrics(SimMetrics& m, const std::vector<Alert>& alerts,
                            const SimConfig& config, const Trace& trace) {
    for (const auto& a : alerts) {
        ++m.alerts_by_detector[a.detector];
        if (a.severity == Severity::Attack &&
            (!m.first_alert_time || a.t_raised < *m.first_alert_time))
            m.first_alert_time = a.t_raised;
    }
    if (m.first_alert_time && config.attack_rate > 0 && config.attack_end > config.attack_start)
        m.detection_delay = *m.first_alert_time - config.attack_start;
    m.false_positives_by_detector = count_false_positives(trace, alerts);
}

class Simulator {
public:
    explicit Simulator(const SimConfig& config) : cfg_(config), rng_(config.seed) {
        CookieParams cookies = cfg_.defense.cookie;
        size_t backlog = cfg_.backlog;
        if (cfg_.tracker_mode == TrackMode::Cache) backlog = cfg_.backlog * 16;
        table_ = std::make_unique<ConnTable>(cfg_.tracker_mode, backlog, cfg_.half_open_timeout,
                                             cookies);
        registry_ = std::make_unique<ProbeRegistry>(cfg_.probe_timeout);
        if (cfg_.defense_enabled) node_ = std::make_unique<DefenseNode>(cfg_.defense);
    }

    SimResult run() {
        generate_legit_arrivals();
        generate_attack_syns();
        if (cfg_.probes_enabled) schedule_sweeps();

        while (!queue_.empty() && queue_.top().t <= cfg_.duration) {
            Event ev = queue_.top();
            queue_.pop();
            ev.fn();
        }
        if (node_) collect_alerts(node_->finish());

        finalize_metrics();
        result_.diag.table_counters = table_->counters();
        return std::move(result_);
    }

private:
    struct Event {
        double t;
        uint64_t seq;
        std::function<void()> fn;
    };
    struct EventCmp {
        bool operator()(const Event& a, const Event& b) const {
            return a.t > b.t || (a.t == b.t && a.seq > b.seq);
        }
    };

    void schedule(double t, std::function<void()> fn) {
        queue_.push(Event{t, next_seq_++, std::move(fn)});
    }

    void append(const PacketRecord& rec) {
        result_.trace.records.push_back(rec);
        if (node_) collect_alerts(node_->observe(rec));
    }

    void collect_alerts(std::vector<Alert> alerts) {
        for (auto& a : alerts) result_.alerts.push_back(std::move(a));
    }

    void emit_alert(Alert alert, double now) {
        if (node_) node_->deliver(alert, now);
        result_.alerts.push_back(std::move(alert));
    }

    double hop() { return cfg_.rtt / 2.0; }

    // ---- traffic generation ------------------------------------------

    void generate_legit_arrivals() {
        if (cfg_.legit_rate <= 0) return;
        double t = cfg_.constant_rate ? 0.0 : rng_.exp_gap(cfg_.legit_rate);
        uint64_t n = 0;
        while (t < cfg_.duration) {
            LegitConn conn;
            conn.key = {cfg_.legit_pool.base + (rng_.u32() % cfg_.legit_pool.host_count()),
                        cfg_.server_ip, static_cast<uint16_t>(10000 + (n % 55000)),
                        cfg_.server_port};
            conn.client_isn = rng_.u32();
            conn.arrival = t;
            conn.echo_replies = rng_.uniform() >= cfg_.legit_icmp_drop_rate;
            ConnKey key = conn.key;
            legit_conns_.emplace(key, conn);
            schedule(t, [this, key, t] { send_syn(key, t, 1); });
            t += cfg_.constant_rate ? 1.0 / cfg_.legit_rate : rng_.exp_gap(cfg_.legit_rate);
            ++n;
        }
    }

    void generate_attack_syns() {
        if (cfg_.attack_rate <= 0 || cfg_.attack_end <= cfg_.attack_start) return;
        double stop = std::min(cfg_.attack_end, cfg_.duration);
        double t = cfg_.attack_start +
                   (cfg_.constant_rate ? 0.0 : rng_.exp_gap(cfg_.attack_rate));
        while (t < stop) {
            uint32_t src = cfg_.spoof_pool.base + (rng_.u32() % cfg_.spoof_pool.host_count());
            uint16_t sport = static_cast<uint16_t>(1024 + (rng_.u32() % 60000));
            uint32_t isn = rng_.u32();
            schedule(t, [this, t, src, sport, isn] { attack_syn(t, src, sport, isn); });
            t += cfg_.constant_rate ? 1.0 / cfg_.attack_rate : rng_.exp_gap(cfg_.attack_rate);
        }
    }

    void schedule_sweeps() {
        for (double t = cfg_.sweep_interval; t <= cfg_.duration; t += cfg_.sweep_interval)
            schedule(t, [this, t] {
                for (const auto& v : registry_->sweep(t)) resolve_probe(v, t);
            });
    }

    // ---- client side -------------------------------------------------

    void send_syn(const ConnKey& key, double t, int attempt) {
        LegitConn& conn = legit_conns_.at(key);
        if (conn.outcome != Outcome::Pending) return;
        conn.attempts = attempt;
        PacketRecord syn;
        syn.ts = t;
        syn.src_ip = key.src_ip;
        syn.dst_ip = key.dst_ip;
        syn.sport = key.sport;
        syn.dport = key.dport;
        syn.flags = FlagSet(kFlagSyn);
        syn.seq = conn.client_isn;
        syn.label = Label::Legit;
        emit_syn_with_origin(syn, key.src_ip);
        schedule(t + hop(), [this, syn, t] { at_server(syn, t + hop()); });
        schedule(t + 1.0, [this, key, attempt] {
            LegitConn& c = legit_conns_.at(key);
            if (c.synack_received || c.outcome != Outcome::Pending) return;
            double now = c.arrival + attempt * 1.0;
            if (attempt == 1)
                send_syn(key, now, 2);
            else
                c.outcome = Outcome::Dropped;
        });
    }

    void attack_syn(double t, uint32_t src, uint16_t sport, uint32_t isn) {
        ++result_.metrics.attack_syns;
        PacketRecord syn;
        syn.ts = t;
        syn.src_ip = src;
        syn.dst_ip = cfg_.server_ip;
        syn.sport = sport;
        syn.dport = cfg_.server_port;
        syn.flags = FlagSet(kFlagSyn);
        syn.seq = isn;
        syn.label = Label::Attack;
        emit_syn_with_origin(syn, cfg_.attacker_ingress);
        schedule(t + hop(), [this, syn, t] { at_server(syn, t + hop()); });
    }

    void emit_syn_with_origin(const PacketRecord& syn, uint32_t true_origin) {
        append(syn);
        if (!cfg_.router_origin_enabled) return;
        PacketRecord origin;
        origin.ts = syn.ts;
        origin.proto = Proto::IcmpOrigin;
        origin.src_ip = true_origin;
        origin.dst_ip = syn.dst_ip;
        origin.router_src = true_origin;
        origin.label = syn.label;
        append(origin);
        SpoofVerdict v = verify_route(syn, &origin);
        bool attack = syn.label == Label::Attack;
        if (attack)
            ++result_.diag.route_checked_attack;
        else
            ++result_.diag.route_checked_legit;
        if (v.result == SpoofVerdict::Result::RouteMismatch) {
            if (attack)
                ++result_.diag.route_mismatch_attack;
            else
                ++result_.diag.route_mismatch_legit;
            emit_alert(Alert{"ROUTE_MISMATCH", syn.ts, syn.ts, syn.ts, 1.0, 1.0,
                             {syn.src_ip}, Severity::Attack},
                       syn.ts);
        }
    }

    void client_rx_synack(const ConnKey& key, const PacketRecord& synack, double t) {
        auto it = legit_conns_.find(key);
        if (it == legit_conns_.end()) return;
        LegitConn& conn = it->second;
        if (conn.synack_received || conn.outcome == Outcome::Dropped) return;
        conn.synack_received = true;
        uint32_t server_seq = synack.seq;
        uint32_t cseq = conn.client_isn + 1;

        auto client_pkt = [this, key, cseq, server_seq](double ts, uint8_t flags, uint32_t len,
                                                        uint32_t seq_off) {
            PacketRecord p;
            p.ts = ts;
            p.src_ip = key.src_ip;
            p.dst_ip = key.dst_ip;
            p.sport = key.sport;
            p.dport = key.dport;
            p.flags = FlagSet(flags);
            p.seq = cseq + seq_off;
            p.ackno = server_seq + 1;
            p.payload_len = len;
            p.label = Label::Legit;
            return p;
        };
        double rtt = cfg_.rtt;
        send_to_server(client_pkt(t, kFlagAck, 0, 0), key);
        schedule(t + rtt, [this, client_pkt, t, rtt, key] {
            send_to_server(client_pkt(t + rtt, kFlagAck | kFlagPsh, 100, 0), key);
        });
        schedule(t + 2 * rtt, [this, client_pkt, t, rtt, key] {
            send_to_server(client_pkt(t + 2 * rtt, kFlagFin | kFlagAck, 0, 100), key);
        });
        schedule(t + 3 * rtt, [this, client_pkt, t, rtt, key] {
            send_to_server(client_pkt(t + 3 * rtt, kFlagAck, 0, 101), key);
        });
    }

    void send_to_server(const PacketRecord& pkt, const ConnKey& key) {
        if (legit_conns_.at(key).outcome == Outcome::ProbeAborted) return;
        append(pkt);
        double arrive = pkt.ts + hop();
        schedule(arrive, [this, pkt, arrive] { at_server(pkt, arrive); });
    }

    void client_rx_echo(const ConnKey& key, const PacketRecord& req, double t) {
        auto it = legit_conns_.find(key);
        if (it == legit_conns_.end() || !it->second.echo_replies) return;
        PacketRecord reply;
        reply.ts = t;
        reply.proto = Proto::IcmpEchoReply;
        reply.src_ip = key.src_ip;
        reply.dst_ip = req.src_ip;
        reply.probe_id = req.probe_id;
        reply.label = Label::Legit;
        append(reply);
        double arrive = t + hop();
        schedule(arrive, [this, reply, arrive] { at_server(reply, arrive); });
    }

    // ---- server / defense side ----------------------------------------

    void at_server(const PacketRecord& pkt, double t) {
        if (!node_) {
            server_handle(pkt, t);
            return;
        }
        for (const auto& action : node_->process(pkt, t)) {
            switch (action.kind) {
                case OutputAction::Kind::Forward:
                    server_handle(pkt, t);
                    break;
                case OutputAction::Kind::Reply: {
                    PacketRecord reply = action.pkt;
                    append(reply);
                    ConnKey client_key = key_of(reply).reversed();
                    if (legit_conns_.contains(client_key))
                        schedule(t + hop(), [this, client_key, reply, t] {
                            client_rx_synack(client_key, reply, t + hop());
                        });
                    break;
                }
                case OutputAction::Kind::ServerOpen: {
                    ConnKey key = action.key;
                    double when = t + cfg_.rtt;  // node<->server handshake charge
                    schedule(when, [this, key, when] { table_->open_established(key, when); });
                    break;
                }
                case OutputAction::Kind::Drop:
                    break;
            }
        }
    }

    void server_handle(const PacketRecord& pkt, double t) {
        if (pkt.proto == Proto::IcmpEchoReply) {
            if (cfg_.probes_enabled)
                if (auto v = registry_->on_icmp_reply(pkt, t)) resolve_probe(*v, t);
            return;
        }
        if (pkt.proto != Proto::Tcp) return;

        ConnKey key = key_of(pkt);
        if (pkt.flags == FlagSet(kFlagSyn)) {
            reap_now(t);
            if (table_->find(key) != nullptr) {
                table_->admit_syn(pkt, t);  // retransmission refresh
                return;
            }
            AdmitResult res = table_->admit_syn(pkt, t, rng_.u32());
            if (res.kind == AdmitResult::Kind::DroppedBacklog) return;

            uint32_t server_seq;
            if (res.kind == AdmitResult::Kind::Accepted) {
                note_half_open_insert(key, pkt.label.value_or(Label::Legit));
                server_seq = table_->find(key)->server_isn;
            } else {
                server_seq = res.cookie_isn;  // stateless cookie reply
            }
            PacketRecord synack;
            synack.ts = t;
            synack.src_ip = pkt.dst_ip;
            synack.dst_ip = pkt.src_ip;
            synack.sport = pkt.dport;
            synack.dport = pkt.sport;
            synack.flags = FlagSet(kFlagSyn | kFlagAck);
            synack.seq = server_seq;
            synack.ackno = pkt.seq + 1;
            synack.label = pkt.label;
            append(synack);
            if (legit_conns_.contains(key))
                schedule(t + hop(),
                         [this, key, synack, t] { client_rx_synack(key, synack, t + hop()); });
            if (cfg_.probes_enabled && res.kind == AdmitResult::Kind::Accepted) {
                auto issued = registry_->on_synack_sent(key, cfg_.server_ip, t);
                issued.echo_req.label = pkt.label;
                append(issued.echo_req);
                probes_.emplace(key,
                                ProbeInfo{issued.probe.probe_id, t, pkt.label.value_or(Label::Legit)});
                if (legit_conns_.contains(key)) {
                    PacketRecord req = issued.echo_req;
                    schedule(t + hop(),
                             [this, key, req, t] { client_rx_echo(key, req, t + hop()); });
                }
            }
            return;
        }

        TransitionReport report = table_->on_packet(pkt, t);
        switch (report.event) {
            case ConnEvent::HandshakeComplete:
            case ConnEvent::Reset:
                note_half_open_remove(key);
                break;
            case ConnEvent::Closed:
                if (auto it = legit_conns_.find(key);
                    it != legit_conns_.end() && it->second.outcome == Outcome::Pending)
                    it->second.outcome = Outcome::Completed;
                break;
            default:
                break;
        }
    }

    void reap_now(double t) {
        for (const ConnKey& key : table_->reap(t)) {
            if (auto it = legit_conns_.find(key);
                it != legit_conns_.end() && it->second.outcome == Outcome::Pending)
                it->second.outcome = Outcome::TimedOut;
            note_half_open_remove(key);
        }
    }

    void resolve_probe(const SpoofVerdict& v, double t) {
        auto pit = probes_.find(v.conn);
        ProbeOutcome outcome;
        if (pit != probes_.end()) {
            outcome.probe_id = pit->second.probe_id;
            outcome.synack_ts = pit->second.synack_ts;
            outcome.label = pit->second.label;
            probes_.erase(pit);
        }
        outcome.conn = v.conn;
        outcome.resolved_ts = t;
        outcome.result = v.result;
        result_.diag.probe_outcomes.push_back(outcome);

        if (v.result != SpoofVerdict::Result::SpoofedNoReply) return;
        table_->abort_entry(v.conn);
        note_half_open_remove(v.conn);
        if (auto it = legit_conns_.find(v.conn); it != legit_conns_.end())
            it->second.outcome = Outcome::ProbeAborted;
        emit_alert(Alert{"SPOOF_PROBE", t, t, t, 1.0, 1.0, {v.conn.src_ip}, Severity::Attack}, t);
    }

    void note_half_open_insert(const ConnKey& key, Label label) {
        half_open_label_.emplace(key, label);
        if (label == Label::Attack) {
            ++attack_half_open_;
            result_.metrics.attack_half_open_peak =
                std::max<uint64_t>(result_.metrics.attack_half_open_peak, attack_half_open_);
        }
        result_.metrics.half_open_peak =
            std::max<uint64_t>(result_.metrics.half_open_peak, table_->half_open_count());
    }

    void note_half_open_remove(const ConnKey& key) {
        auto it = half_open_label_.find(key);
        if (it == half_open_label_.end()) return;
        if (it->second == Label::Attack) --attack_half_open_;
        half_open_label_.erase(it);
    }

    void finalize_metrics() {
        SimMetrics& m = result_.metrics;
        for (const auto& [key, conn] : legit_conns_) {
            ++m.legit_attempted;
            bool measured = conn.arrival >= cfg_.measure_start;
            if (measured) ++m.measured_attempted;
            switch (conn.outcome) {
                case Outcome::Completed:
                    ++m.legit_completed;
                    if (measured) ++m.measured_completed;
                    break;
                case Outcome::Dropped: ++m.legit_dropped_backlog; break;
                case Outcome::ProbeAborted: ++m.legit_probe_aborted; break;
                case Outcome::TimedOut: ++m.legit_timed_out; break;
                case Outcome::Pending: ++m.legit_in_flight; break;
            }
        }
        m.completion_rate =
            m.measured_attempted == 0
                ? 1.0
                : static_cast<double>(m.measured_completed) /
                      static_cast<double>(m.measured_attempted);
        m.conservation_ok = table_->conservation_holds();
        m.occupancy_ok = cfg_.tracker_mode == TrackMode::Cookies
                             ? table_->half_open_count() == 0 && m.half_open_peak == 0
                             : m.half_open_peak <= table_->backlog_limit();
        finalize_alert_metrics(m, result_.alerts, cfg_, result_.trace);
    }

    SimConfig cfg_;
    Rng rng_;
    std::priority_queue<Event, std::vector<Event>, EventCmp> queue_;
    uint64_t next_seq_ = 0;
    std::unique_ptr<ConnTable> table_;
    std::unique_ptr<ProbeRegistry> registry_;
    std::unique_ptr<DefenseNode> node_;
    std::map<ConnKey, LegitConn> legit_conns_;
    std::map<ConnKey, Label> half_open_label_;
    std::map<ConnKey, ProbeInfo> probes_;
    uint64_t attack_half_open_ = 0;
    SimResult result_;
};

}  // namespace

SimResult run(const SimConfig& config) {
    config.validate();
    Simulator sim(config);
    return sim.run();
}

SimMetrics score(const Trace& trace, const std::vector<Alert>& alerts, const SimConfig& config) {
    bool any_label = false;
    for (const auto& rec : trace.records)
        if (rec.label) { any_label = true; break; }
    if (!any_label && !trace.records.empty())
        throw UnlabeledTrace("trace carries no ground-truth labels");

    struct ConnView {
        double first_syn = std::numeric_limits<double>::infinity();
        bool synack = false;
        double synack_ts = 0.0;
        double finack_ts = -1.0;
        double final_ack_ts = -1.0;
    };
    std::map<ConnKey, ConnView> conns;

    for (const auto& rec : trace.records)
        if (rec.proto == Proto::Tcp && rec.label == Label::Legit &&
            rec.flags == FlagSet(kFlagSyn)) {
            auto& view = conns[key_of(rec)];
            view.first_syn = std::min(view.first_syn, rec.ts);
        }

    std::map<uint64_t, double> echo_reply_ts;
    std::map<uint32_t, std::vector<std::pair<double, uint64_t>>> echo_reqs_by_dst;
    for (const auto& rec : trace.records) {
        if (rec.proto == Proto::IcmpEchoReq && rec.probe_id) {
            echo_reqs_by_dst[rec.dst_ip].emplace_back(rec.ts, *rec.probe_id);
        } else if (rec.proto == Proto::IcmpEchoReply && rec.probe_id) {
            echo_reply_ts.emplace(*rec.probe_id, rec.ts);
        } else if (rec.proto == Proto::Tcp && rec.label == Label::Legit) {
            ConnKey key = key_of(rec);
            if (auto it = conns.find(key.reversed());
                it != conns.end() && rec.flags.syn() && rec.flags.ack()) {
                if (!it->second.synack) {
                    it->second.synack = true;
                    it->second.synack_ts = rec.ts;
                }
            } else if (auto cit = conns.find(key); cit != conns.end()) {
                ConnView& view = cit->second;
                if (rec.flags.fin() && rec.flags.ack() && view.finack_ts < 0)
                    view.finack_ts = rec.ts;
                else if (rec.flags == FlagSet(kFlagAck) && view.finack_ts >= 0 &&
                         rec.ts >= view.finack_ts && view.final_ack_ts < 0)
                    view.final_ack_ts = rec.ts;
            }
        }
    }

    double hop = config.rtt / 2.0;
    auto probe_abort_time = [&](const ConnView& view,
                                const ConnKey& key) -> std::optional<double> {
        if (!config.probes_enabled || !view.synack) return std::nullopt;
        auto dit = echo_reqs_by_dst.find(key.src_ip);
        if (dit == echo_reqs_by_dst.end()) return std::nullopt;
        for (const auto& [req_ts, probe_id] : dit->second) {
            if (std::abs(req_ts - view.synack_ts) > 1e-9) continue;
            double deadline = req_ts + config.probe_timeout;
            std::optional<double> reply_arrival;
            if (auto rit = echo_reply_ts.find(probe_id); rit != echo_reply_ts.end())
                reply_arrival = rit->second + hop;
            if (reply_arrival && *reply_arrival <= deadline) return std::nullopt;
            double sweep_t =
                (std::floor(deadline / config.sweep_interval) + 1.0) * config.sweep_interval;
            double abort_t = sweep_t;
            if (reply_arrival && *reply_arrival > deadline)
                abort_t = std::min(abort_t, *reply_arrival);
            if (abort_t <= config.duration) return abort_t;
            return std::nullopt;
        }
        return std::nullopt;
    };

    SimMetrics m;
    for (const auto& [key, view] : conns) {
        ++m.legit_attempted;
        bool measured = view.first_syn >= config.measure_start;
        if (measured) ++m.measured_attempted;
        if (probe_abort_time(view, key)) {
            ++m.legit_probe_aborted;
        } else if (view.final_ack_ts >= 0 && view.final_ack_ts + hop <= config.duration) {
            ++m.legit_completed;
            if (measured) ++m.measured_completed;
        } else if (!view.synack) {
            if (view.first_syn + 2.0 <= config.duration)
                ++m.legit_dropped_backlog;
            else
                ++m.legit_in_flight;
        } else {
            ++m.legit_in_flight;  // timed-out lumps in here; see docs
        }
    }
    m.completion_rate = m.measured_attempted == 0
                            ? 1.0
                            : static_cast<double>(m.measured_completed) /
                                  static_cast<double>(m.measured_attempted);
    for (const auto& rec : trace.records)
        if (rec.proto == Proto::Tcp && rec.label == Label::Attack &&
            rec.flags == FlagSet(kFlagSyn))
            ++m.attack_syns;

    finalize_alert_metrics(m, alerts, config, trace);
    return m;
}

}  // namespace synflood
