#include "synflood/conn_table.hpp"

#include <cmath>
#include <cstring>

namespace synflood {

ConnKey key_of(const PacketRecord& pkt) {
    return {pkt.src_ip, pkt.dst_ip, pkt.sport, pkt.dport};
}

namespace {

// SipHash-2-4 over a short message, keyed with the 128-bit cookie secret.
inline uint64_t rotl(uint64_t x, int b) { return (x << b) | (x >> (64 - b)); }

inline void sipround(uint64_t& v0, uint64_t& v1, uint64_t& v2, uint64_t& v3) {
    v0 += v1; v1 = rotl(v1, 13); v1 ^= v0; v0 = rotl(v0, 32);
    v2 += v3; v3 = rotl(v3, 16); v3 ^= v2;
    v0 += v3; v3 = rotl(v3, 21); v3 ^= v0;
    v2 += v1; v1 = rotl(v1, 17); v1 ^= v2; v2 = rotl(v2, 32);
}

uint64_t siphash24(uint64_t k0, uint64_t k1, const uint8_t* data, size_t len) {
    uint64_t v0 = 0x736f6d6570736575ULL ^ k0;
    uint64_t v1 = 0x646f72616e646f6dULL ^ k1;
    uint64_t v2 = 0x6c7967656e657261ULL ^ k0;
    uint64_t v3 = 0x7465646279746573ULL ^ k1;

    const size_t n_blocks = len / 8;
    for (size_t i = 0; i < n_blocks; ++i) {
        uint64_t m;
        std::memcpy(&m, data + i * 8, 8);
        v3 ^= m;
        sipround(v0, v1, v2, v3);
        sipround(v0, v1, v2, v3);
        v0 ^= m;
    }
    uint64_t last = static_cast<uint64_t>(len & 0xff) << 56;
    const uint8_t* tail = data + n_blocks * 8;
    for (size_t i = 0; i < (len & 7); ++i)
        last |= static_cast<uint64_t>(tail[i]) << (8 * i);
    v3 ^= last;
    sipround(v0, v1, v2, v3);
    sipround(v0, v1, v2, v3);
    v0 ^= last;
    v2 ^= 0xff;
    sipround(v0, v1, v2, v3);
    sipround(v0, v1, v2, v3);
    sipround(v0, v1, v2, v3);
    sipround(v0, v1, v2, v3);
    return v0 ^ v1 ^ v2 ^ v3;
}

uint32_t cookie_hash24(const CookieParams& params, const ConnKey& key, uint64_t counter) {
    uint8_t msg[20];
    std::memcpy(msg + 0, &key.src_ip, 4);
    std::memcpy(msg + 4, &key.dst_ip, 4);
    std::memcpy(msg + 8, &key.sport, 2);
    std::memcpy(msg + 10, &key.dport, 2);
    std::memcpy(msg + 12, &counter, 8);
    return static_cast<uint32_t>(siphash24(params.secret_lo, params.secret_hi, msg, sizeof(msg)) &
                                 0xffffff);
}

}  // namespace

uint64_t cookie_counter(const CookieParams& params, double now) {
    return static_cast<uint64_t>(std::floor(now / params.counter_period));
}

uint32_t cookie_encode(const CookieParams& params, const ConnKey& key, uint64_t counter,
                       unsigned mss_idx) {
    if (mss_idx >= params.mss_table.size())
        throw std::out_of_range("mss_idx out of range");
    uint32_t c5 = static_cast<uint32_t>(counter % 32);
    return (c5 << 27) | (static_cast<uint32_t>(mss_idx) << 24) |
           cookie_hash24(params, key, counter);
}

CookieCheck cookie_validate(const CookieParams& params, const ConnKey& key, uint32_t ackno,
                            double now) {
    uint32_t c = ackno - 1;  // mod 2^32 by unsigned wraparound
    uint32_t counter5 = c >> 27;
    unsigned mss_idx = (c >> 24) & 7;
    uint32_t h24 = c & 0xffffff;

    uint64_t cur = cookie_counter(params, now);
    bool low5_seen = false;
    for (uint32_t age = 0; age <= params.max_counter_age; ++age) {
        if (cur < age) break;
        uint64_t cand = cur - age;
        if (cand % 32 != counter5) continue;
        low5_seen = true;
        if (cookie_hash24(params, key, cand) == h24)
            return {CookieCheck::Status::Valid, params.mss_table[mss_idx]};
    }
    if (!low5_seen)
        return {CookieCheck::Status::Stale, 0};
    return {CookieCheck::Status::Invalid, 0};
}

ConnTable::ConnTable(TrackMode mode, size_t backlog_limit, double half_open_timeout,
                     CookieParams cookie_params)
    : mode_(mode),
      backlog_limit_(backlog_limit),
      half_open_timeout_(half_open_timeout),
      cookie_params_(cookie_params) {
    if (backlog_limit_ == 0)
        throw std::invalid_argument("backlog_limit must be positive");
}

AdmitResult ConnTable::admit_syn(const PacketRecord& pkt, double now, uint32_t server_isn) {
    if (pkt.proto != Proto::Tcp || pkt.flags != FlagSet(kFlagSyn))
        throw NotASyn("admit_syn requires a pure SYN");
    ConnKey key = key_of(pkt);

    if (mode_ == TrackMode::Cookies) {
        return {AdmitResult::Kind::CookieReply,
                cookie_encode(cookie_params_, key, cookie_counter(cookie_params_, now),
                              kDefaultMssIdx)};
    }

    if (auto it = entries_.find(key); it != entries_.end()) {
        // SYN retransmission for a live key: refresh, no duplicate entry.
        it->second.last_update = now;
        return {AdmitResult::Kind::Accepted, 0};
    }
    if (half_open_ >= backlog_limit_) {
        ++counters_.dropped_backlog;
        return {AdmitResult::Kind::DroppedBacklog, 0};
    }
    ConnEntry entry;
    entry.key = key;
    entry.state = ConnState::SynReceived;
    entry.created_at = now;
    entry.last_update = now;
    entry.server_isn = server_isn;
    entry.client_isn = pkt.seq;
    entries_.emplace(key, entry);
    ++half_open_;
    ++counters_.admitted;
    return {AdmitResult::Kind::Accepted, 0};
}

TransitionReport ConnTable::on_packet(const PacketRecord& pkt, double now) {
    ConnKey key = key_of(pkt);

    // Server -> client direction: record the SYN+ACK's ISN for passive
    // traces; no state transition.
    if (auto it = entries_.find(key.reversed()); it != entries_.end()) {
        ConnEntry& entry = it->second;
        if (entry.state == ConnState::SynReceived && pkt.flags.syn() && pkt.flags.ack())
            entry.server_isn = pkt.seq;
        // The final ACK of a teardown closes the connection from either
        // direction.
        if (entry.state == ConnState::Teardown && pkt.flags == FlagSet(kFlagAck)) {
            entries_.erase(it);
            return {ConnEvent::Closed, ConnPhase::Teardown};
        }
        entry.last_update = now;
        return {ConnEvent::Ignored,
                entry.state == ConnState::SynReceived ? ConnPhase::Handshake : entry.phase()};
    }

    auto it = entries_.find(key);
    if (it == entries_.end()) {
        if (mode_ == TrackMode::Cookies && pkt.flags == FlagSet(kFlagAck)) {
            CookieCheck check = cookie_validate(cookie_params_, key, pkt.ackno, now);
            if (check.status == CookieCheck::Status::Valid) {
                ConnEntry entry;
                entry.key = key;
                entry.state = ConnState::Established;
                entry.created_at = now;
                entry.last_update = now;
                entry.server_isn = pkt.ackno - 1;
                entry.client_isn = pkt.seq - 1;
                entries_.emplace(key, entry);
                ++counters_.admitted;
                ++counters_.established;
                return {ConnEvent::HandshakeComplete, ConnPhase::Handshake};
            }
        }
        return {ConnEvent::Ignored, ConnPhase::Any};
    }

    ConnEntry& entry = it->second;
    if (pkt.flags.rst()) {
        if (entry.state == ConnState::SynReceived) {
            ++counters_.reset_during_handshake;
            --half_open_;
        }
        entries_.erase(it);
        return {ConnEvent::Reset, ConnPhase::Teardown};
    }
    switch (entry.state) {
        case ConnState::SynReceived:
            if (pkt.flags == FlagSet(kFlagAck) && pkt.ackno == entry.server_isn + 1) {
                entry.state = ConnState::Established;
                entry.last_update = now;
                --half_open_;
                ++counters_.established;
                return {ConnEvent::HandshakeComplete, ConnPhase::Handshake};
            }
            return {ConnEvent::Ignored, ConnPhase::Handshake};
        case ConnState::Established:
            if (pkt.flags.fin() && pkt.flags.ack()) {
                entry.state = ConnState::Teardown;
                entry.last_update = now;
                return {ConnEvent::TeardownBegun, ConnPhase::Teardown};
            }
            entry.last_update = now;
            return {ConnEvent::Ignored, ConnPhase::Conversation};
        case ConnState::Teardown:
            if (pkt.flags == FlagSet(kFlagAck)) {
                entries_.erase(it);
                return {ConnEvent::Closed, ConnPhase::Teardown};
            }
            entry.last_update = now;
            return {ConnEvent::Ignored, ConnPhase::Teardown};
    }
    return {ConnEvent::Ignored, ConnPhase::Any};
}

std::vector<ConnKey> ConnTable::reap(double now) {
    std::vector<ConnKey> expired;
    for (auto it = entries_.begin(); it != entries_.end();) {
        if (it->second.state == ConnState::SynReceived &&
            now - it->second.created_at > half_open_timeout_) {
            expired.push_back(it->first);
            it = entries_.erase(it);
            --half_open_;
            ++counters_.reaped;
        } else {
            ++it;
        }
    }
    return expired;
}

std::optional<ConnState> ConnTable::abort_entry(const ConnKey& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    ConnState state = it->second.state;
    if (state == ConnState::SynReceived) {
        --half_open_;
        ++counters_.reset_during_handshake;
    }
    entries_.erase(it);
    return state;
}

void ConnTable::open_established(const ConnKey& key, double now) {
    ConnEntry entry;
    entry.key = key;
    entry.state = ConnState::Established;
    entry.created_at = now;
    entry.last_update = now;
    entries_.insert_or_assign(key, entry);
    ++counters_.admitted;
    ++counters_.established;
}

const ConnEntry* ConnTable::find(const ConnKey& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
}

bool ConnTable::conservation_holds() const {
    return counters_.admitted == counters_.established + counters_.reaped +
                                     counters_.reset_during_handshake + half_open_;
}

}  // namespace synflood
