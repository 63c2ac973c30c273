#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "synflood/conn_table.hpp"
#include "synflood/packet.hpp"

namespace synflood {

struct PendingProbe {
    uint64_t probe_id = 0;
    ConnKey conn;
    uint32_t target = 0;  // the claimed client address
    double sent_at = 0.0;
    double deadline = 0.0;
};

struct SpoofVerdict {
    enum class Result : uint8_t { Reachable, SpoofedNoReply, RouteMismatch, Unverified };
    ConnKey conn;
    Result result = Result::Unverified;
    std::string evidence;
};

std::string spoof_result_name(SpoofVerdict::Result r);

struct DuplicateProbeForConn : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// ICMP echo probes testing whether the claimed SYN source actually saw
/// the SYN+ACK. Single-owner mutable registry.
class ProbeRegistry {
public:
    explicit ProbeRegistry(double probe_timeout = 1.0);

    struct Issued {
        PendingProbe probe;
        PacketRecord echo_req;
    };

    /// Registers a probe for the half-open connection and returns the echo
    /// request to deliver. Throws DuplicateProbeForConn if an unexpired
    /// probe already exists for the connection.
    Issued on_synack_sent(const ConnKey& conn, uint32_t server_ip, double now);

    /// Matches an echo reply against live probes. A reply after the
    /// deadline does not rehabilitate the source.
    std::optional<SpoofVerdict> on_icmp_reply(const PacketRecord& pkt, double now);

    /// Expires every probe whose deadline has passed (deadline < now).
    std::vector<SpoofVerdict> sweep(double now);

    size_t live_count() const { return by_id_.size(); }
    double probe_timeout() const { return probe_timeout_; }

private:
    double probe_timeout_;
    uint64_t next_id_ = 1;
    std::map<uint64_t, PendingProbe> by_id_;
    std::map<ConnKey, uint64_t> by_conn_;
};

/// Case-4 route check: the packet's claimed source against the last-hop
/// router's asserted origin. Pass origin == nullptr when no companion
/// ICMP_ORIGIN record exists.
SpoofVerdict verify_route(const PacketRecord& pkt, const PacketRecord* origin);

}  // namespace synflood
