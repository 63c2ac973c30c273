// Acceptance gate: ten end-to-end criteria, one pass/fail line each.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "synflood/classify.hpp"
#include "synflood/codec.hpp"
#include "synflood/conn_table.hpp"
#include "synflood/detect.hpp"
#include "synflood/sim.hpp"
#include "synflood/util.hpp"

using namespace synflood;
namespace fs = std::filesystem;

namespace {

struct Criterion {
    Criterion(int n, const char* t, double limit)
        : number(n), title(t), time_limit_s(limit) {}

    int number;
    const char* title;
    double time_limit_s;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    bool ok = true;
    std::string detail;

    void expect(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            if (!detail.empty()) detail += "; ";
            detail += what;
        }
    }

    ~Criterion() {
        double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (elapsed >= time_limit_s) {
            ok = false;
            detail += (detail.empty() ? "" : "; ") + std::string("over time budget");
        }
        std::printf("[criterion %2d] %s - %s (%.2f s)%s%s\n", number, ok ? "PASS" : "FAIL",
                    title, elapsed, detail.empty() ? "" : ": ", detail.c_str());
        std::fflush(stdout);
        CHECK_MESSAGE(ok, title << (detail.empty() ? "" : ": ") << detail);
    }
};

// Independent legality oracle (duplicated on purpose; shares nothing with
// the implementation under test).
Verdict oracle_classify(FlagSet f, ConnPhase phase) {
    uint8_t b = f.bits();
    if ((b & kFlagSyn) && (b & kFlagFin))
        return {VerdictClass::Malicious, reason::kSynFin, {}};
    if (b == 0) return {VerdictClass::Abnormal, reason::kNullFlags, {}};
    static const std::set<uint8_t> hs = {kFlagSyn, kFlagSyn | kFlagAck, kFlagAck};
    static const std::set<uint8_t> conv = {kFlagAck, kFlagAck | kFlagPsh, kFlagAck | kFlagUrg,
                                           kFlagAck | kFlagPsh | kFlagUrg};
    static const std::set<uint8_t> td = {kFlagFin | kFlagAck, kFlagAck,
                                         kFlagPsh | kFlagFin | kFlagAck, kFlagRst,
                                         kFlagRst | kFlagAck};
    bool legal = false;
    switch (phase) {
        case ConnPhase::Handshake: legal = hs.count(b); break;
        case ConnPhase::Conversation: legal = conv.count(b); break;
        case ConnPhase::Teardown: legal = td.count(b); break;
        case ConnPhase::Any: legal = hs.count(b) || conv.count(b) || td.count(b); break;
    }
    if (legal) return {};
    return {VerdictClass::Abnormal, reason::kIllegalCombo, {}};
}

PacketRecord conforming_packet(std::mt19937_64& rng) {
    static const std::vector<uint8_t> any_legal = {
        kFlagSyn, kFlagSyn | kFlagAck, kFlagAck, kFlagAck | kFlagPsh,
        kFlagAck | kFlagUrg, kFlagAck | kFlagPsh | kFlagUrg,
        kFlagFin | kFlagAck, kFlagPsh | kFlagFin | kFlagAck,
        kFlagRst, kFlagRst | kFlagAck};
    PacketRecord p;
    p.proto = Proto::Tcp;
    p.src_ip = static_cast<uint32_t>(rng());
    p.dst_ip = static_cast<uint32_t>(rng());
    p.sport = static_cast<uint16_t>(1 + rng() % 65535);
    p.dport = static_cast<uint16_t>(1 + rng() % 65535);
    p.flags = FlagSet(any_legal[rng() % any_legal.size()]);
    p.seq = static_cast<uint32_t>(rng());
    p.ackno = p.flags.ack() ? static_cast<uint32_t>(1 + rng() % 0xfffffffe) : 0;
    p.payload_len = p.flags == FlagSet(kFlagSyn) ? 0 : static_cast<uint32_t>(rng() % 1400);
    return p;
}

SimConfig saturation_config() {
    SimConfig c;
    c.duration = 60.0;
    c.seed = 11;
    c.legit_rate = 5.0;
    c.attack_rate = 100.0;
    c.attack_start = 0.0;
    c.attack_end = 60.0;
    c.backlog = 128;
    c.half_open_timeout = 30.0;
    c.measure_start = 5.0;
    return c;
}

const std::string kCli = SYNFLOOD_CLI_PATH;

int run_cli(const std::string& args) {
    std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return status == -1 ? -1 : WEXITSTATUS(status);
}

fs::path work_dir() {
    static fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "synflood_acceptance";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

// Synthetic diurnal day: per-second connection rate by hour; every
// connection contributes one pure SYN and one FIN,ACK in the same second so
// the SYN:FIN ratio stays 1.
void append_normal_second(Trace& trace, double sec, int rate) {
    for (int k = 0; k < rate; ++k) {
        PacketRecord syn;
        syn.ts = sec + 0.001 * k;
        syn.src_ip = 0xac100000 + static_cast<uint32_t>(k);
        syn.dst_ip = 0xc0000201;
        syn.sport = static_cast<uint16_t>(1000 + k);
        syn.dport = 80;
        syn.flags = FlagSet(kFlagSyn);
        syn.seq = 1;
        trace.records.push_back(syn);
        PacketRecord fin = syn;
        fin.ts = sec + 0.5 + 0.001 * k;
        fin.flags = FlagSet(kFlagFin | kFlagAck);
        fin.seq = 2;
        fin.ackno = 1;
        trace.records.push_back(fin);
    }
}

int diurnal_rate(int hour) {
    return (hour >= 8 && hour < 16) ? 20 : 2;  // peak is 10x the trough
}

}  // namespace

TEST_CASE("acceptance") {
    // 1. Flag-legality oracle equivalence: 256/256 exact.
    {
        Criterion c{1, "flag-legality oracle equivalence (256/256)", 1.0};
        int matches = 0;
        for (uint8_t bits = 0; bits < 64; ++bits)
            for (ConnPhase phase : {ConnPhase::Handshake, ConnPhase::Conversation,
                                    ConnPhase::Teardown, ConnPhase::Any}) {
                Verdict got = classify_flags(FlagSet(bits), phase);
                Verdict want = oracle_classify(FlagSet(bits), phase);
                if (got.cls == want.cls && got.reason == want.reason) ++matches;
            }
        c.expect(matches == 256, "matched " + std::to_string(matches) + "/256");
    }

    // 2. Header-rule exactness: crafted violations fire, 1e4 conforming
    // packets produce zero false positives.
    {
        Criterion c{2, "header rules exact on crafted and randomized packets", 5.0};
        std::mt19937_64 rng(2024);
        PacketRecord base = conforming_packet(rng);
        PacketRecord v1 = base;
        v1.sport = 0;
        c.expect(classify_header(v1).reason == reason::kPortZero, "PORT_ZERO missed");
        PacketRecord v2 = base;
        v2.flags = FlagSet(kFlagAck);
        v2.ackno = 0;
        c.expect(classify_header(v2).reason == reason::kAckZero, "ACK_ZERO missed");
        PacketRecord v3 = base;
        v3.flags = FlagSet(kFlagSyn);
        v3.ackno = 0;
        v3.payload_len = 40;
        c.expect(classify_header(v3).reason == reason::kSynWithData, "SYN_WITH_DATA missed");
        int false_pos = 0;
        for (int i = 0; i < 10000; ++i)
            if (!classify_header(conforming_packet(rng)).legal()) ++false_pos;
        c.expect(false_pos == 0, std::to_string(false_pos) + " false positives");
    }

    // 3. SYN-cookie soundness and completeness.
    {
        Criterion c{3, "SYN cookie round-trip, forgery resistance, staleness", 10.0};
        std::mt19937_64 rng(3);
        int bad_roundtrip = 0, bad_stale = 0;
        for (int i = 0; i < 10000; ++i) {
            CookieParams params;
            params.secret_lo = rng();
            params.secret_hi = rng();
            ConnKey key{static_cast<uint32_t>(rng()), static_cast<uint32_t>(rng()),
                        static_cast<uint16_t>(rng()), static_cast<uint16_t>(rng())};
            uint64_t counter = rng() % 1000000;
            unsigned mss_idx = static_cast<unsigned>(rng() % 8);
            uint32_t isn = cookie_encode(params, key, counter, mss_idx);
            double now = static_cast<double>(counter) * params.counter_period;
            auto check = cookie_validate(params, key, isn + 1, now);
            if (check.status != CookieCheck::Status::Valid ||
                check.mss != params.mss_table[mss_idx])
                ++bad_roundtrip;
            double stale_now =
                now + (params.max_counter_age + 1) * params.counter_period;
            if (cookie_validate(params, key, isn + 1, stale_now).status !=
                CookieCheck::Status::Stale)
                ++bad_stale;
        }
        c.expect(bad_roundtrip == 0,
                 std::to_string(bad_roundtrip) + " round-trip failures");
        c.expect(bad_stale == 0, std::to_string(bad_stale) + " aged cookies not STALE");
        CookieParams fixed;
        fixed.secret_lo = 0xdeadbeefcafef00dull;
        fixed.secret_hi = 0x0123456789abcdefull;
        ConnKey key{0x0a010203, 0xc0000201, 3333, 80};
        int forged = 0;
        for (int i = 0; i < 100000; ++i)
            if (cookie_validate(fixed, key, static_cast<uint32_t>(rng()), 777777.0).status ==
                CookieCheck::Status::Valid)
                ++forged;
        c.expect(forged == 0, std::to_string(forged) + " random acknos validated");
    }

    // 4. Backlog invariant and conservation over randomized scenarios.
    {
        Criterion c{4, "backlog bound and conservation over 100 random scenarios", 60.0};
        std::mt19937_64 rng(4);
        for (int i = 0; i < 100 && c.ok; ++i) {
            SimConfig cfg;
            cfg.duration = 5.0 + static_cast<double>(rng() % 150) / 10.0;
            cfg.seed = rng();
            cfg.legit_rate = static_cast<double>(rng() % 200) / 10.0;
            cfg.attack_rate = static_cast<double>(rng() % 600) / 10.0;
            cfg.attack_start = 0.0;
            cfg.attack_end = cfg.duration * (static_cast<double>(rng() % 100) / 100.0);
            cfg.backlog = 1 + rng() % 256;
            cfg.half_open_timeout = 1.0 + static_cast<double>(rng() % 300) / 10.0;
            cfg.probes_enabled = rng() % 2 == 0;
            SimResult r = run(cfg);
            c.expect(r.metrics.half_open_peak <= cfg.backlog,
                     "occupancy exceeded backlog in scenario " + std::to_string(i));
            c.expect(r.metrics.occupancy_ok, "occupancy flag in scenario " + std::to_string(i));
            c.expect(r.metrics.conservation_ok,
                     "conservation broke in scenario " + std::to_string(i));
        }
    }

    // 5. Attack harm and defense efficacy on the saturation scenario.
    {
        Criterion c{5, "flood harm <= 0.05 undefended, >= 0.95 delegated", 10.0};
        SimConfig undefended = saturation_config();
        SimResult harm = run(undefended);
        c.expect(harm.metrics.completion_rate <= 0.05,
                 "undefended completion " + std::to_string(harm.metrics.completion_rate));
        SimConfig defended = saturation_config();
        defended.tracker_mode = TrackMode::Cookies;
        defended.defense_enabled = true;
        defended.defense.initial_mode = NodeMode::Delegate;
        defended.defense.cookie.secret_lo = 0x1122334455667788ull;
        defended.defense.cookie.secret_hi = 0x99aabbccddeeff00ull;
        SimResult saved = run(defended);
        c.expect(saved.metrics.completion_rate >= 0.95,
                 "defended completion " + std::to_string(saved.metrics.completion_rate));
    }

    // 6. Detection-time ordering: the parametric detector sees a trough-hour
    // attack that the ratio detector (silent all day) cannot.
    {
        Criterion c{6, "parametric beats ratio on a trough-hour attack", 10.0};
        Trace day;
        for (int hour = 0; hour < 24; ++hour)
            for (int s = 0; s < 3600; ++s)
                append_normal_second(day, hour * 3600.0 + s, diurnal_rate(hour));
        TimeOfDayProfile profile = train_profile(day, 3600.0, 0.0);

        auto day_windows = window_fold(day, 1.0);
        c.expect(detect_ratio(day_windows, 3.0, 20).empty(),
                 "ratio alerted on the attack-free day");
        c.expect(detect_parametric(day_windows, profile, 3.0, 0.5, 0.0).empty(),
                 "parametric alerted on its own training day");

        // Attack horizon inside the 02:00 trough: 60 s of normal traffic,
        // then 30 s adding 8 pure SYN/s (4x the bin mean of 2).
        const double h0 = 2 * 3600.0;
        const double onset = h0 + 60.0;
        Trace horizon;
        for (int s = 0; s < 90; ++s) {
            double sec = h0 + s;
            append_normal_second(horizon, sec, 2);
            if (sec >= onset)
                for (int k = 0; k < 8; ++k) {
                    PacketRecord syn;
                    syn.ts = sec + 0.01 + 0.001 * k;
                    syn.src_ip = 0x0a000000 + static_cast<uint32_t>(s * 8 + k);
                    syn.dst_ip = 0xc0000201;
                    syn.sport = 2000;
                    syn.dport = 80;
                    syn.flags = FlagSet(kFlagSyn);
                    syn.seq = 9;
                    horizon.records.push_back(syn);
                }
        }
        std::sort(horizon.records.begin(), horizon.records.end(),
                  [](const PacketRecord& a, const PacketRecord& b) { return a.ts < b.ts; });
        auto windows = window_fold(horizon, 1.0);
        auto parametric = detect_parametric(windows, profile, 3.0, 0.5, 0.0);
        c.expect(!parametric.empty(), "parametric never fired");
        if (!parametric.empty())
            c.expect(parametric.front().t_raised <= onset + 2.0,
                     "first parametric alert at " + std::to_string(parametric.front().t_raised) +
                         " vs onset " + std::to_string(onset));
        c.expect(detect_ratio(windows, 3.0, 20).empty(),
                 "ratio alerted over the attack horizon");
    }

    // 7. ICMP-feedback discrimination.
    {
        Criterion c{7, "probe feedback aborts spoofed, spares legit", 10.0};
        SimConfig cfg = saturation_config();
        cfg.duration = 30.0;
        cfg.attack_end = 30.0;
        cfg.attack_rate = 50.0;
        cfg.backlog = 256;
        cfg.probes_enabled = true;
        cfg.legit_icmp_drop_rate = 0.0;
        SimResult clean = run(cfg);
        uint64_t attack_probes = 0;
        for (const auto& p : clean.diag.probe_outcomes) {
            if (p.label == Label::Attack) {
                ++attack_probes;
                c.expect(p.result == SpoofVerdict::Result::SpoofedNoReply,
                         "attack probe not SPOOFED_NO_REPLY");
                c.expect(p.resolved_ts - p.synack_ts <=
                             cfg.probe_timeout + cfg.sweep_interval + 1e-9,
                         "abort slower than probe_timeout + sweep_interval");
            }
        }
        c.expect(attack_probes > 0, "no attack probes issued");
        c.expect(clean.metrics.legit_probe_aborted == 0,
                 std::to_string(clean.metrics.legit_probe_aborted) +
                     " legit connections aborted at drop rate 0");

        SimConfig lossy = cfg;
        lossy.duration = 120.0;
        lossy.attack_end = 120.0;
        lossy.legit_icmp_drop_rate = 0.1;
        SimResult noisy = run(lossy);
        double false_abort =
            static_cast<double>(noisy.metrics.legit_probe_aborted) /
            static_cast<double>(noisy.metrics.legit_attempted);
        c.expect(false_abort >= 0.07 && false_abort <= 0.13,
                 "false-abort rate " + std::to_string(false_abort));
    }

    // 8. Route-verification exactness.
    {
        Criterion c{8, "route origin flags every spoofed SYN, no legit", 5.0};
        SimConfig cfg = saturation_config();
        cfg.duration = 20.0;
        cfg.attack_end = 20.0;
        cfg.attack_rate = 50.0;
        cfg.router_origin_enabled = true;
        SimResult r = run(cfg);
        c.expect(r.diag.route_checked_attack > 0, "no attack SYNs checked");
        c.expect(r.diag.route_checked_legit > 0, "no legit SYNs checked");
        c.expect(r.diag.route_mismatch_attack == r.diag.route_checked_attack,
                 "some attack SYNs passed route verification");
        c.expect(r.diag.route_mismatch_legit == 0,
                 std::to_string(r.diag.route_mismatch_legit) + " legit SYNs flagged");
    }

    // 9. End-to-end determinism through the CLI.
    {
        Criterion c{9, "CLI simulate is byte-deterministic", 10.0};
        fs::path dir = work_dir();
        std::string cfg_path = (dir / "det.json").string();
        std::ofstream(cfg_path) << R"({"duration": 30.0, "seed": 77, "legit_rate": 5.0,
            "attack_rate": 60.0, "attack_start": 2.0, "attack_end": 30.0,
            "probes_enabled": true})";
        for (int i = 1; i <= 2; ++i) {
            int rc = run_cli("simulate --config " + cfg_path +
                             " --out " + (dir / ("t" + std::to_string(i) + ".jsonl")).string() +
                             " --metrics " + (dir / ("m" + std::to_string(i) + ".json")).string() +
                             " --alerts " + (dir / ("a" + std::to_string(i) + ".jsonl")).string());
            c.expect(rc == 0, "simulate exited " + std::to_string(rc));
        }
        for (const char* pair : {"t1.jsonl t2.jsonl", "m1.json m2.json", "a1.jsonl a2.jsonl"}) {
            std::string names(pair);
            auto space = names.find(' ');
            std::string a = read_file((dir / names.substr(0, space)).string());
            std::string b = read_file((dir / names.substr(space + 1)).string());
            c.expect(!a.empty() && a == b, names + " differ");
        }
    }

    // 10. Offline cmd_detect reproduces the online alert stream exactly.
    {
        Criterion c{10, "offline detect equals in-path alert sequence", 10.0};
        fs::path dir = work_dir();
        std::string cfg_path = (dir / "online.json").string();
        std::ofstream(cfg_path) << R"({"duration": 60.0, "seed": 42, "legit_rate": 5.0,
            "attack_rate": 100.0, "attack_start": 0.0, "attack_end": 60.0,
            "tracker_mode": "cookies",
            "defense": {"enabled": true, "initial_mode": "delegate",
                        "cookie_secret": "112233445566778899aabbccddeeff00",
                        "detectors": ["ratio", "srccount"]}})";
        int rc = run_cli("simulate --config " + cfg_path +
                         " --out " + (dir / "online.jsonl").string() +
                         " --metrics " + (dir / "online_m.json").string() +
                         " --alerts " + (dir / "online_a.jsonl").string());
        c.expect(rc == 0, "simulate exited " + std::to_string(rc));
        rc = run_cli("detect --trace " + (dir / "online.jsonl").string() +
                     " --detectors ratio,srccount --out " + (dir / "offline_a.jsonl").string());
        c.expect(rc == 0, "detect exited " + std::to_string(rc));
        std::string online = read_file((dir / "online_a.jsonl").string());
        std::string offline = read_file((dir / "offline_a.jsonl").string());
        c.expect(!online.empty(), "online run raised no alerts");
        c.expect(online == offline, "alert streams differ");
    }
}
