#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "synflood/classify.hpp"
#include "synflood/packet.hpp"

namespace synflood {

/// Flow key, oriented client -> server at the first SYN.
struct ConnKey {
    uint32_t src_ip = 0;
    uint32_t dst_ip = 0;
    uint16_t sport = 0;
    uint16_t dport = 0;

    ConnKey reversed() const { return {dst_ip, src_ip, dport, sport}; }
    auto operator<=>(const ConnKey&) const = default;
};

ConnKey key_of(const PacketRecord& pkt);

enum class ConnState : uint8_t { SynReceived, Established, Teardown };

struct ConnEntry {
    ConnKey key;
    ConnState state = ConnState::SynReceived;
    double created_at = 0.0;
    double last_update = 0.0;
    uint32_t server_isn = 0;
    uint32_t client_isn = 0;

    ConnPhase phase() const {
        switch (state) {
            case ConnState::SynReceived: return ConnPhase::Handshake;
            case ConnState::Established: return ConnPhase::Conversation;
            case ConnState::Teardown: return ConnPhase::Teardown;
        }
        return ConnPhase::Any;
    }
};

/// SYN cookie parameters. Bit layout of the encoded ISN is
/// counter mod 32 (5 bits) | mss index (3 bits) | keyed hash (24 bits).
struct CookieParams {
    uint64_t secret_lo = 0;
    uint64_t secret_hi = 0;
    double counter_period = 64.0;
    uint32_t max_counter_age = 2;
    std::array<uint32_t, 8> mss_table = {536, 1220, 1440, 1452, 1460, 4312, 8960, 16384};
};

uint64_t cookie_counter(const CookieParams& params, double now);

uint32_t cookie_encode(const CookieParams& params, const ConnKey& key, uint64_t counter,
                       unsigned mss_idx);

struct CookieCheck {
    enum class Status : uint8_t { Valid, Invalid, Stale };
    Status status = Status::Invalid;
    uint32_t mss = 0;
};

CookieCheck cookie_validate(const CookieParams& params, const ConnKey& key, uint32_t ackno,
                            double now);

// Default MSS index encoded when the trace carries no MSS (index 4 -> 1460).
inline constexpr unsigned kDefaultMssIdx = 4;

enum class TrackMode : uint8_t { Plain, Cache, Cookies };

struct AdmitResult {
    enum class Kind : uint8_t { Accepted, DroppedBacklog, CookieReply };
    Kind kind = Kind::Accepted;
    uint32_t cookie_isn = 0;
};

enum class ConnEvent : uint8_t { HandshakeComplete, TeardownBegun, Closed, Ignored, Reset };

struct TransitionReport {
    ConnEvent event = ConnEvent::Ignored;
    ConnPhase phase_for_classifier = ConnPhase::Any;
};

struct NotASyn : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Global half-open/established connection table with a bounded backlog,
/// timeout reaping, and optional stateless SYN cookie operation.
class ConnTable {
public:
    struct Counters {
        uint64_t admitted = 0;
        uint64_t dropped_backlog = 0;
        uint64_t established = 0;
        uint64_t reaped = 0;
        uint64_t reset_during_handshake = 0;
    };

    ConnTable(TrackMode mode, size_t backlog_limit, double half_open_timeout,
              CookieParams cookie_params = {});

    /// Handles a fresh SYN. PLAIN/CACHE insert a half-open entry while the
    /// backlog has room; COOKIES never stores state and answers with an
    /// encoded ISN. A retransmitted SYN for a live half-open key refreshes
    /// last_update instead of duplicating the entry.
    AdmitResult admit_syn(const PacketRecord& pkt, double now, uint32_t server_isn = 0);

    /// Drives the handshake/teardown state machine for non-SYN packets.
    TransitionReport on_packet(const PacketRecord& pkt, double now);

    /// Removes half-open entries strictly older than the timeout.
    std::vector<ConnKey> reap(double now);

    /// Removes an entry regardless of state (probe/route abort path).
    /// Returns the state it was in, if present.
    std::optional<ConnState> abort_entry(const ConnKey& key);

    /// Inserts a completed connection directly (defense-node delegation:
    /// the node finished the handshake on the client's behalf).
    void open_established(const ConnKey& key, double now);

    size_t half_open_count() const { return half_open_; }
    size_t size() const { return entries_.size(); }
    const Counters& counters() const { return counters_; }
    TrackMode mode() const { return mode_; }
    size_t backlog_limit() const { return backlog_limit_; }

    const ConnEntry* find(const ConnKey& key) const;

    /// Conservation identity: admitted == established + reaped +
    /// reset_during_handshake + currently half-open.
    bool conservation_holds() const;

private:
    TrackMode mode_;
    size_t backlog_limit_;
    double half_open_timeout_;
    CookieParams cookie_params_;
    std::map<ConnKey, ConnEntry> entries_;
    size_t half_open_ = 0;
    Counters counters_;
};

}  // namespace synflood
