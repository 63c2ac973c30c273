#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "synflood/packet.hpp"

namespace synflood {

enum class Severity : uint8_t { Warn, Attack };

std::string severity_name(Severity s);

/// Windowed detector alarm, serializable for exchange between nodes.
struct Alert {
    std::string detector;  // RATIO, SRC_COUNT, PARAMETRIC, SPOOF_PROBE, ROUTE_MISMATCH, FLAG_SCAN
    double t_raised = 0.0;
    double w_start = 0.0;
    double w_end = 0.0;
    double metric = 0.0;
    double threshold = 0.0;
    std::vector<uint32_t> suspected_sources;
    Severity severity = Severity::Attack;

    bool operator==(const Alert&) const = default;
};

std::string render_alert(const Alert& alert);
Alert parse_alert(const std::string& line);

std::string render_alerts(const std::vector<Alert>& alerts);
std::vector<Alert> parse_alerts(const std::string& text);

/// Per-window SYN / FIN-RST / distinct-source counts.
struct RateWindow {
    double window_start = 0.0;
    double window_len = 1.0;
    uint64_t syn_count = 0;
    uint64_t finrst_count = 0;
    std::set<uint32_t> sources;

    double window_end() const { return window_start + window_len; }
};

struct EmptyTrace : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Streams packets into consecutive windows aligned to the first packet's
/// timestamp. Shared by offline folding and the in-path defense node so the
/// two produce identical windows for identical input streams.
class WindowAccumulator {
public:
    explicit WindowAccumulator(double window_len);

    /// Feeds one record (in non-decreasing ts order); returns any windows
    /// that closed because this record falls past their end.
    std::vector<RateWindow> feed(const PacketRecord& pkt);

    /// Closes every window whose end lies at or before t (time-driven
    /// close; used by the defense node's housekeeping tick).
    std::vector<RateWindow> close_until(double t);

    /// Closes and returns the window in progress, if any packet was seen.
    std::optional<RateWindow> finish();

    bool started() const { return started_; }

private:
    double window_len_;
    bool started_ = false;
    RateWindow current_;
};

/// Partitions the trace into consecutive windows. Throws EmptyTrace.
std::vector<RateWindow> window_fold(const Trace& trace, double window_len);

/// Per-time-of-day-bin statistics of normal SYN arrival rate.
struct TimeOfDayProfile {
    struct Bin {
        double mean = 0.0;
        double std = 0.0;
        uint64_t n = 0;
    };
    double bin_len = 3600.0;
    std::vector<Bin> bins;  // 86400 / bin_len entries covering the day

    size_t bin_index(double time_of_day_seconds) const;
};

struct TraceTooShort : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UntrainedBin : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string render_profile(const TimeOfDayProfile& profile);
TimeOfDayProfile parse_profile(const std::string& text);

/// Learns per-bin mean/std of SYN rate from an attack-free trace, using
/// 1 s windows. Sample (n-1) standard deviation.
TimeOfDayProfile train_profile(const Trace& trace, double bin_len, double epoch_offset = 0.0);

struct DetectorParams {
    double window_len = 1.0;
    double rho = 3.0;
    uint64_t min_syn = 20;
    double growth_factor = 3.0;
    size_t baseline_n = 10;
    double k = 3.0;
    double std_floor = 0.5;
    double epoch_offset = 0.0;
};

/// SYN-vs-FIN/RST ratio baseline detector.
class RatioDetector {
public:
    RatioDetector(double rho, uint64_t min_syn);
    std::optional<Alert> step(const RateWindow& w);

private:
    double rho_;
    uint64_t min_syn_;
};

/// Distinct-source-count growth baseline detector with a running mean over
/// the last baseline_n alert-free windows.
class SrcCountDetector {
public:
    SrcCountDetector(double growth_factor, size_t baseline_n);
    std::optional<Alert> step(const RateWindow& w);

private:
    double growth_factor_;
    size_t baseline_n_;
    std::deque<double> baseline_;
};

/// Parametric per-bin z-score detector against a time-of-day profile.
class ParametricDetector {
public:
    ParametricDetector(const TimeOfDayProfile& profile, double k, double std_floor,
                       double epoch_offset = 0.0);
    /// Throws UntrainedBin when the window's bin has fewer than 2 samples.
    std::optional<Alert> step(const RateWindow& w);

private:
    const TimeOfDayProfile& profile_;
    double k_;
    double std_floor_;
    double epoch_offset_;
};

std::vector<Alert> detect_ratio(const std::vector<RateWindow>& windows, double rho,
                                uint64_t min_syn);
std::vector<Alert> detect_srccount(const std::vector<RateWindow>& windows, double growth_factor,
                                   size_t baseline_n);
std::vector<Alert> detect_parametric(const std::vector<RateWindow>& windows,
                                     const TimeOfDayProfile& profile, double k,
                                     double std_floor = 0.5, double epoch_offset = 0.0);

}  // namespace synflood
