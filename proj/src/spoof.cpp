#include "synflood/spoof.hpp"

namespace synflood {

std::string spoof_result_name(SpoofVerdict::Result r) {
    switch (r) {
        case SpoofVerdict::Result::Reachable: return "REACHABLE";
        case SpoofVerdict::Result::SpoofedNoReply: return "SPOOFED_NO_REPLY";
        case SpoofVerdict::Result::RouteMismatch: return "ROUTE_MISMATCH";
        case SpoofVerdict::Result::Unverified: return "UNVERIFIED";
    }
    return "?";
}

ProbeRegistry::ProbeRegistry(double probe_timeout) : probe_timeout_(probe_timeout) {}

ProbeRegistry::Issued ProbeRegistry::on_synack_sent(const ConnKey& conn, uint32_t server_ip,
                                                    double now) {
    if (auto it = by_conn_.find(conn); it != by_conn_.end()) {
        const PendingProbe& live = by_id_.at(it->second);
        if (now <= live.deadline)
            throw DuplicateProbeForConn("unexpired probe exists for connection");
        // Stale leftover; replace it.
        by_id_.erase(it->second);
        by_conn_.erase(it);
    }
    PendingProbe probe;
    probe.probe_id = next_id_++;
    probe.conn = conn;
    probe.target = conn.src_ip;
    probe.sent_at = now;
    probe.deadline = now + probe_timeout_;
    by_id_.emplace(probe.probe_id, probe);
    by_conn_.emplace(conn, probe.probe_id);

    PacketRecord req;
    req.ts = now;
    req.proto = Proto::IcmpEchoReq;
    req.src_ip = server_ip;
    req.dst_ip = probe.target;
    req.probe_id = probe.probe_id;
    return {probe, req};
}

std::optional<SpoofVerdict> ProbeRegistry::on_icmp_reply(const PacketRecord& pkt, double now) {
    if (pkt.proto != Proto::IcmpEchoReply || !pkt.probe_id)
        return std::nullopt;
    auto it = by_id_.find(*pkt.probe_id);
    if (it == by_id_.end())
        return std::nullopt;
    PendingProbe probe = it->second;
    by_id_.erase(it);
    by_conn_.erase(probe.conn);
    if (now <= probe.deadline)
        return SpoofVerdict{probe.conn, SpoofVerdict::Result::Reachable,
                            "echo reply from " + ip_to_string(probe.target)};
    return SpoofVerdict{probe.conn, SpoofVerdict::Result::SpoofedNoReply,
                        "late echo reply from " + ip_to_string(probe.target)};
}

std::vector<SpoofVerdict> ProbeRegistry::sweep(double now) {
    std::vector<SpoofVerdict> verdicts;
    for (auto it = by_id_.begin(); it != by_id_.end();) {
        if (it->second.deadline < now) {
            verdicts.push_back({it->second.conn, SpoofVerdict::Result::SpoofedNoReply,
                                "no echo reply from " + ip_to_string(it->second.target)});
            by_conn_.erase(it->second.conn);
            it = by_id_.erase(it);
        } else {
            ++it;
        }
    }
    return verdicts;
}

SpoofVerdict verify_route(const PacketRecord& pkt, const PacketRecord* origin) {
    ConnKey conn = key_of(pkt);
    if (origin == nullptr || origin->proto != Proto::IcmpOrigin || !origin->router_src)
        return {conn, SpoofVerdict::Result::Unverified, "no router origin record"};
    if (pkt.src_ip == *origin->router_src)
        return {conn, SpoofVerdict::Result::Reachable, "route-match"};
    return {conn, SpoofVerdict::Result::RouteMismatch,
            "claimed " + ip_to_string(pkt.src_ip) + " asserted " +
                ip_to_string(*origin->router_src)};
}

}  // namespace synflood
