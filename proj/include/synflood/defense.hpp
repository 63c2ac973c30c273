#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "synflood/conn_table.hpp"
#include "synflood/detect.hpp"
#include "synflood/packet.hpp"

namespace synflood {

enum class NodeMode : uint8_t { Monitor, Delegate };

std::string node_mode_name(NodeMode m);

struct DefenseConfig {
    NodeMode initial_mode = NodeMode::Monitor;
    CookieParams cookie;
    double block_ttl = 60.0;
    uint32_t quiet_windows = 10;  // consecutive alert-free windows before revert; must be > 0
    uint64_t flag_scan_min = 3;   // non-legal packets per window to raise FLAG_SCAN

    DetectorParams detectors;
    bool ratio_enabled = true;
    bool srccount_enabled = false;
    bool parametric_enabled = false;
    std::optional<TimeOfDayProfile> profile;  // required when parametric_enabled

    void validate() const;
};

struct OutputAction {
    enum class Kind : uint8_t { Forward, Reply, Drop, ServerOpen };
    Kind kind = Kind::Forward;
    PacketRecord pkt;        // Forward: the packet; Reply: the generated reply
    std::string drop_reason;
    ConnKey key;             // ServerOpen
    uint32_t mss = 0;        // ServerOpen

    static OutputAction forward(PacketRecord p);
    static OutputAction reply(PacketRecord p);
    static OutputAction drop(std::string reason);
    static OutputAction server_open(ConnKey k, uint32_t mss);
};

// Drop reason vocabulary.
namespace drop {
inline constexpr const char* kBlocked = "BLOCKED";
inline constexpr const char* kBadCookie = "BAD_COOKIE";
inline constexpr const char* kNoFlow = "NO_FLOW";
}  // namespace drop

struct AlertReport {
    bool stale = false;
    bool mode_changed = false;
    NodeMode mode = NodeMode::Monitor;
    size_t sources_added = 0;
};

/// In-path defense element. Monitoring mode forwards traffic and feeds
/// detectors; delegation mode answers SYNs with cookie SYN+ACKs on the
/// server's behalf, validates return ACKs, and blocks suspected sources.
class DefenseNode {
public:
    explicit DefenseNode(DefenseConfig config);

    struct Stats {
        uint64_t forwarded = 0;
        uint64_t delegated = 0;   // cookie SYN+ACK replies sent
        uint64_t validated = 0;   // valid cookie ACKs -> server opens
        uint64_t blocked = 0;
        uint64_t dropped_bad_cookie = 0;
        uint64_t dropped_classify = 0;
        uint64_t warn_alerts_seen = 0;
    };

    /// Forwarding decision for one packet through the node.
    std::vector<OutputAction> process(const PacketRecord& pkt, double now);

    /// Detector feed: call once per packet that traverses the node, in
    /// timestamp order. Closes elapsed windows and returns alerts raised by
    /// them (already applied locally and queued to peers).
    std::vector<Alert> observe(const PacketRecord& pkt);

    /// Applies an alert received locally or from a peer.
    AlertReport on_alert(const Alert& alert, double now);

    /// Housekeeping: closes windows elapsed by now, expires blocklist
    /// entries, applies revert-to-monitor when enough quiet windows passed.
    std::vector<Alert> tick(double now);

    /// Flushes the window in progress at end of stream.
    std::vector<Alert> finish();

    NodeMode mode() const { return mode_; }
    const Stats& stats() const { return stats_; }
    bool is_blocked(uint32_t ip, double now) const;
    size_t blocklist_size() const { return blocklist_.size(); }

    std::deque<Alert>& peer_outbox() { return peer_outbox_; }
    void deliver(const Alert& alert, double now) { on_alert(alert, now); }

private:
    std::vector<Alert> close_window(const RateWindow& w);
    void expire_blocklist(double now);

    DefenseConfig config_;
    NodeMode mode_;
    Stats stats_;
    std::map<uint32_t, double> blocklist_;  // ip -> expiry
    std::set<ConnKey> validated_;
    WindowAccumulator windows_;
    RatioDetector ratio_;
    SrcCountDetector srccount_;
    std::unique_ptr<ParametricDetector> parametric_;
    uint64_t flagscan_in_window_ = 0;
    std::deque<Alert> peer_outbox_;
    double last_alert_t_ = -1.0;
    uint32_t quiet_streak_ = 0;
};

}  // namespace synflood
