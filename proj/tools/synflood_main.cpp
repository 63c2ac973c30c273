// Command-line front end: simulate scenarios, train diurnal profiles, run
// detectors over traces, classify single packets, and score results.
//
// Exit codes: 0 success, 1 usage error, 2 input-validation error,
// 3 detection found (detect with --fail-on-alert; classify of a non-legal
// packet).

#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "synflood/classify.hpp"
#include "synflood/codec.hpp"
#include "synflood/defense.hpp"
#include "synflood/detect.hpp"
#include "synflood/sim.hpp"
#include "synflood/util.hpp"

using namespace synflood;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInput = 2;
constexpr int kExitDetection = 3;

int cmd_simulate(const std::string& config_path, const std::string& out_path,
                 const std::string& metrics_path, const std::string& alerts_path,
                 std::optional<uint64_t> seed_override) {
    SimConfig config;
    try {
        config = parse_sim_config(read_file(config_path));
        if (seed_override) config.seed = *seed_override;
        config.validate();
    } catch (const std::exception& e) {
        std::cerr << "invalid config: " << e.what() << "\n";
        return kExitInput;
    }
    SimResult result = run(config);
    atomic_write_file(out_path, encode_trace(result.trace));
    atomic_write_file(metrics_path, render_metrics(result.metrics) + "\n");
    atomic_write_file(alerts_path, render_alerts(result.alerts));
    std::printf("completion_rate=%.4f detection_delay=%s alerts=%zu\n",
                result.metrics.completion_rate,
                result.metrics.detection_delay
                    ? std::to_string(*result.metrics.detection_delay).c_str()
                    : "n/a",
                result.alerts.size());
    return kExitOk;
}

struct DetectOptions {
    std::string trace_path;
    std::string detectors_csv = "ratio";
    std::string profile_path;
    std::string out_path;
    double window = 1.0;
    double rho = 3.0;
    uint64_t min_syn = 20;
    double g = 3.0;
    size_t baseline_n = 10;
    double k = 3.0;
    double std_floor = 0.5;
    double epoch_offset = 0.0;
    uint64_t flag_scan_min = 3;
    bool fail_on_alert = false;
};

std::vector<std::string> split_csv(const std::string& csv) {
    std::vector<std::string> out;
    size_t pos = 0;
    while (pos <= csv.size()) {
        size_t comma = csv.find(',', pos);
        if (comma == std::string::npos) comma = csv.size();
        if (comma > pos) out.push_back(csv.substr(pos, comma - pos));
        pos = comma + 1;
    }
    return out;
}

int cmd_detect(const DetectOptions& opt) {
    Trace trace;
    try {
        trace = load_trace_file(opt.trace_path);
    } catch (const std::exception& e) {
        std::cerr << "cannot read trace: " << e.what() << "\n";
        return kExitInput;
    }

    bool want_ratio = false, want_srccount = false, want_parametric = false,
         want_flagscan = false;
    for (const auto& name : split_csv(opt.detectors_csv)) {
        if (name == "ratio") want_ratio = true;
        else if (name == "srccount") want_srccount = true;
        else if (name == "parametric") want_parametric = true;
        else if (name == "flagscan") want_flagscan = true;
        else {
            std::cerr << "unknown detector: " << name << "\n";
            return kExitUsage;
        }
    }
    TimeOfDayProfile profile;
    if (want_parametric) {
        if (opt.profile_path.empty()) {
            std::cerr << "parametric detector requires --profile\n";
            return kExitInput;
        }
        try {
            profile = parse_profile(read_file(opt.profile_path));
        } catch (const std::exception& e) {
            std::cerr << "cannot read profile: " << e.what() << "\n";
            return kExitInput;
        }
    }

    std::vector<RateWindow> windows;
    try {
        windows = window_fold(trace, opt.window);
    } catch (const EmptyTrace&) {
        // An empty trace has no windows and raises no alerts.
    }

    // Per-window non-legal packet counts for the flagscan detector.
    std::vector<uint64_t> nonlegal(windows.size(), 0);
    if (want_flagscan && !windows.empty()) {
        double t0 = windows.front().window_start;
        for (const auto& rec : trace.records) {
            if (rec.proto != Proto::Tcp) continue;
            Verdict v = classify_header(rec);
            if (v.legal()) v = classify_flags(rec.flags, ConnPhase::Any);
            if (v.legal()) continue;
            auto idx = static_cast<size_t>((rec.ts - t0) / opt.window);
            if (idx < nonlegal.size()) ++nonlegal[idx];
        }
    }

    RatioDetector ratio(opt.rho, opt.min_syn);
    SrcCountDetector srccount(opt.g, opt.baseline_n);
    std::unique_ptr<ParametricDetector> parametric;
    if (want_parametric)
        parametric =
            std::make_unique<ParametricDetector>(profile, opt.k, opt.std_floor, opt.epoch_offset);

    // Same per-window evaluation order as the in-path defense node, so an
    // offline run reproduces the online alert sequence.
    std::vector<Alert> alerts;
    try {
        for (size_t i = 0; i < windows.size(); ++i) {
            const RateWindow& w = windows[i];
            if (want_ratio)
                if (auto a = ratio.step(w)) alerts.push_back(std::move(*a));
            if (want_srccount)
                if (auto a = srccount.step(w)) alerts.push_back(std::move(*a));
            if (want_parametric)
                if (auto a = parametric->step(w)) alerts.push_back(std::move(*a));
            if (want_flagscan && nonlegal[i] >= opt.flag_scan_min)
                alerts.push_back(Alert{"FLAG_SCAN", w.window_end(), w.window_start,
                                       w.window_end(), static_cast<double>(nonlegal[i]),
                                       static_cast<double>(opt.flag_scan_min), {},
                                       Severity::Attack});
        }
    } catch (const UntrainedBin& e) {
        std::cerr << "untrained profile bin: " << e.what() << "\n";
        return kExitInput;
    }

    atomic_write_file(opt.out_path, render_alerts(alerts));
    size_t attack_alerts = 0;
    for (const auto& a : alerts)
        if (a.severity == Severity::Attack) ++attack_alerts;
    std::printf("windows=%zu alerts=%zu\n", windows.size(), alerts.size());
    if (opt.fail_on_alert && attack_alerts > 0) return kExitDetection;
    return kExitOk;
}

int cmd_train_profile(const std::string& trace_path, double bin_len, double epoch_offset,
                      const std::string& out_path) {
    try {
        Trace trace = load_trace_file(trace_path);
        TimeOfDayProfile profile = train_profile(trace, bin_len, epoch_offset);
        atomic_write_file(out_path, render_profile(profile) + "\n");
        uint64_t trained = 0;
        for (const auto& b : profile.bins)
            if (b.n >= 2) ++trained;
        std::printf("bins=%zu trained=%llu\n", profile.bins.size(),
                    static_cast<unsigned long long>(trained));
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "train-profile failed: " << e.what() << "\n";
        return kExitInput;
    }
}

int cmd_classify(const std::string& flags_text, const std::string& phase_name) {
    FlagSet flags;
    ConnPhase phase;
    try {
        flags = parse_flags(flags_text);
        phase = parse_phase(phase_name);
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    }
    Verdict v = classify_flags(flags, phase);
    if (v.legal()) {
        std::printf("LEGAL\n");
        return kExitOk;
    }
    std::printf("%s %s\n", verdict_class_name(v.cls).c_str(), v.reason.c_str());
    return kExitDetection;
}

int cmd_report(const std::string& trace_path, const std::string& alerts_path, double window,
               const std::string& out_path) {
    Trace trace;
    std::vector<Alert> alerts;
    try {
        trace = load_trace_file(trace_path);
        alerts = parse_alerts(read_file(alerts_path));
    } catch (const std::exception& e) {
        std::cerr << "cannot read inputs: " << e.what() << "\n";
        return kExitInput;
    }
    bool any_label = false;
    for (const auto& rec : trace.records)
        if (rec.label) { any_label = true; break; }
    if (!any_label) {
        std::cerr << "trace carries no ground-truth labels\n";
        return kExitInput;
    }

    std::vector<RateWindow> windows;
    try {
        windows = window_fold(trace, window);
    } catch (const EmptyTrace&) {
        std::cerr << "empty trace\n";
        return kExitInput;
    }
    double t0 = windows.front().window_start;
    auto window_index = [&](double t) -> long {
        return static_cast<long>(std::floor((t - t0) / window + 1e-9));
    };

    std::set<long> attack_windows;
    std::optional<double> first_attack_ts;
    for (const auto& rec : trace.records)
        if (rec.label == Label::Attack) {
            attack_windows.insert(window_index(rec.ts));
            if (!first_attack_ts) first_attack_ts = rec.ts;
        }

    std::map<std::string, std::set<long>> alerted_by_detector;
    std::map<std::string, uint64_t> alert_counts;
    std::optional<double> first_alert_t;
    for (const auto& a : alerts) {
        long idx = a.w_end > a.w_start ? window_index(a.w_start) : window_index(a.t_raised);
        alerted_by_detector[a.detector].insert(idx);
        ++alert_counts[a.detector];
        if (a.severity == Severity::Attack && (!first_alert_t || a.t_raised < *first_alert_t))
            first_alert_t = a.t_raised;
    }

    nlohmann::ordered_json report;
    report["total_windows"] = windows.size();
    report["attack_windows"] = attack_windows.size();
    report["detectors"] = nlohmann::ordered_json::object();
    std::printf("%-14s %10s %10s %8s\n", "detector", "precision", "recall", "alerts");
    for (const auto& [det, wins] : alerted_by_detector) {
        size_t hits = 0;
        for (long w : wins)
            if (attack_windows.count(w)) ++hits;
        double precision = wins.empty() ? 0.0 : static_cast<double>(hits) / wins.size();
        double recall = attack_windows.empty()
                            ? 0.0
                            : static_cast<double>(hits) / attack_windows.size();
        report["detectors"][det] = {{"precision", precision},
                                    {"recall", recall},
                                    {"alerts", alert_counts[det]}};
        std::printf("%-14s %10.3f %10.3f %8llu\n", det.c_str(), precision, recall,
                    static_cast<unsigned long long>(alert_counts[det]));
    }
    if (first_alert_t && first_attack_ts)
        report["detection_delay"] = *first_alert_t - *first_attack_ts;
    else
        report["detection_delay"] = nullptr;
    atomic_write_file(out_path, report.dump() + "\n");
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Trace-driven TCP SYN flood detection and defense toolkit"};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "Run a labeled attack/defense scenario");
    std::string config_path, trace_out, metrics_out = "metrics.json",
                             alerts_out = "alerts.jsonl";
    std::optional<uint64_t> seed_override;
    sim->add_option("--config", config_path, "Scenario config JSON")->required();
    sim->add_option("--out", trace_out, "Output trace (.jsonl)")->required();
    sim->add_option("--metrics", metrics_out, "Output metrics JSON");
    sim->add_option("--alerts", alerts_out, "Output alert JSONL");
    sim->add_option("--seed", seed_override, "Seed override");

    // detect
    auto* det = app.add_subcommand("detect", "Run detectors causally over a trace");
    DetectOptions dopt;
    det->add_option("--trace", dopt.trace_path, "Input trace")->required();
    det->add_option("--detectors", dopt.detectors_csv,
                    "Comma list: ratio,srccount,parametric,flagscan");
    det->add_option("--profile", dopt.profile_path, "Time-of-day profile (parametric)");
    det->add_option("--window", dopt.window, "Window length, seconds");
    det->add_option("--rho", dopt.rho, "SYN/FINRST ratio threshold");
    det->add_option("--min-syn", dopt.min_syn, "Minimum SYNs per window for ratio");
    det->add_option("--g", dopt.g, "Source-count growth factor");
    det->add_option("--baseline-n", dopt.baseline_n, "Source-count baseline windows");
    det->add_option("--k", dopt.k, "Parametric z-score threshold");
    det->add_option("--std-floor", dopt.std_floor, "Parametric std floor");
    det->add_option("--epoch-offset", dopt.epoch_offset, "Time-of-day offset, seconds");
    det->add_option("--flag-scan-min", dopt.flag_scan_min, "Flagscan per-window threshold");
    det->add_option("--out", dopt.out_path, "Output alert JSONL")->required();
    det->add_flag("--fail-on-alert", dopt.fail_on_alert, "Exit 3 when attack alerts raised");

    // train-profile
    auto* train = app.add_subcommand("train-profile", "Learn a diurnal SYN-rate profile");
    std::string train_trace, profile_out;
    double bin_len = 3600.0, train_epoch = 0.0;
    train->add_option("--trace", train_trace, "Attack-free training trace")->required();
    train->add_option("--bin", bin_len, "Bin length, seconds");
    train->add_option("--epoch-offset", train_epoch, "Time-of-day offset, seconds");
    train->add_option("--out", profile_out, "Output profile JSON")->required();

    // classify
    auto* cls = app.add_subcommand("classify", "Classify a flag combination");
    std::string flags_text, phase_name = "any";
    cls->add_option("--flags", flags_text, "Flag characters, e.g. SF")->required();
    cls->add_option("--phase", phase_name, "handshake|conversation|teardown|any");

    // report
    auto* rep = app.add_subcommand("report", "Score alerts against a labeled trace");
    std::string rep_trace, rep_alerts, rep_out;
    double rep_window = 1.0;
    rep->add_option("--trace", rep_trace, "Labeled trace")->required();
    rep->add_option("--alerts", rep_alerts, "Alert JSONL")->required();
    rep->add_option("--window", rep_window, "Window length, seconds");
    rep->add_option("--out", rep_out, "Output report JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (sim->parsed())
            return cmd_simulate(config_path, trace_out, metrics_out, alerts_out, seed_override);
        if (det->parsed()) return cmd_detect(dopt);
        if (train->parsed())
            return cmd_train_profile(train_trace, bin_len, train_epoch, profile_out);
        if (cls->parsed()) return cmd_classify(flags_text, phase_name);
        if (rep->parsed()) return cmd_report(rep_trace, rep_alerts, rep_window, rep_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
    return kExitUsage;
}
