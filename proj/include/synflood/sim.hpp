#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "synflood/conn_table.hpp"
#include "synflood/defense.hpp"
#include "synflood/detect.hpp"
#include "synflood/packet.hpp"
#include "synflood/spoof.hpp"

namespace synflood {

struct ConfigInvalid : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UnlabeledTrace : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// IPv4 prefix for source sampling.
struct Cidr {
    uint32_t base = 0;
    uint32_t prefix_len = 0;

    static Cidr parse(const std::string& text);
    std::string to_string() const;
    bool contains(uint32_t ip) const;
    uint32_t host_count() const;
    bool overlaps(const Cidr& other) const;
};

struct SimConfig {
    double duration = 60.0;
    uint64_t seed = 1;
    double legit_rate = 5.0;   // connections/s
    double attack_rate = 0.0;  // SYN/s
    double attack_start = 0.0;
    double attack_end = 0.0;
    Cidr spoof_pool = {0x0a000000, 8};   // 10.0.0.0/8
    Cidr legit_pool = {0xac100000, 12};  // 172.16.0.0/12
    double rtt = 0.05;
    double jitter = 0.0;
    size_t backlog = 128;
    double half_open_timeout = 30.0;
    TrackMode tracker_mode = TrackMode::Plain;
    bool defense_enabled = false;
    DefenseConfig defense;
    double legit_icmp_drop_rate = 0.0;
    bool router_origin_enabled = false;
    bool probes_enabled = false;
    double probe_timeout = 1.0;
    double sweep_interval = 0.5;
    double epoch_offset = 0.0;
    double measure_start = 0.0;  // completion_rate counts arrivals at or after this
    bool constant_rate = false;  // evenly spaced arrivals instead of Poisson
    uint32_t server_ip = 0xc0000201;         // 192.0.2.1
    uint16_t server_port = 80;
    uint32_t attacker_ingress = 0xcb007142;  // 203.0.113.66

    void validate() const;  // throws ConfigInvalid
};

SimConfig parse_sim_config(const std::string& json_text);
std::string render_sim_config(const SimConfig& config);

struct SimMetrics {
    uint64_t legit_attempted = 0;
    uint64_t legit_completed = 0;
    uint64_t legit_dropped_backlog = 0;
    uint64_t legit_probe_aborted = 0;
    uint64_t legit_timed_out = 0;
    uint64_t legit_in_flight = 0;
    uint64_t attack_syns = 0;
    uint64_t attack_half_open_peak = 0;
    double completion_rate = 0.0;  // over arrivals in [measure_start, duration]
    uint64_t measured_attempted = 0;
    uint64_t measured_completed = 0;
    std::optional<double> first_alert_time;
    std::optional<double> detection_delay;
    std::map<std::string, uint64_t> alerts_by_detector;
    std::map<std::string, uint64_t> false_positives_by_detector;
    bool conservation_ok = true;
    uint64_t half_open_peak = 0;
    bool occupancy_ok = true;
};

std::string render_metrics(const SimMetrics& m);

/// Test-facing probe resolution log.
struct ProbeOutcome {
    uint64_t probe_id = 0;
    ConnKey conn;
    double synack_ts = 0.0;
    double resolved_ts = 0.0;
    SpoofVerdict::Result result = SpoofVerdict::Result::Unverified;
    Label label = Label::Legit;
};

struct SimDiagnostics {
    std::vector<ProbeOutcome> probe_outcomes;
    uint64_t route_checked_legit = 0;
    uint64_t route_mismatch_legit = 0;
    uint64_t route_checked_attack = 0;
    uint64_t route_mismatch_attack = 0;
    ConnTable::Counters table_counters;
};

struct SimResult {
    Trace trace;
    SimMetrics metrics;
    std::vector<Alert> alerts;
    SimDiagnostics diag;
};

/// Deterministic discrete-event run: same config (including seed) produces
/// byte-identical trace, metrics, and alerts.
SimResult run(const SimConfig& config);

/// Recomputes the scoreable metrics from the labeled trace and the alert
/// stream alone, mirroring the simulator's timing model. Throws
/// UnlabeledTrace if no record carries a label.
SimMetrics score(const Trace& trace, const std::vector<Alert>& alerts, const SimConfig& config);

}  // namespace synflood
