#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace synflood {

// TCP flag bits, URG=32 ... FIN=1.
constexpr uint8_t kFlagUrg = 32;
constexpr uint8_t kFlagAck = 16;
constexpr uint8_t kFlagPsh = 8;
constexpr uint8_t kFlagRst = 4;
constexpr uint8_t kFlagSyn = 2;
constexpr uint8_t kFlagFin = 1;

/// Six TCP control flags as a 6-bit value.
class FlagSet {
public:
    constexpr FlagSet() = default;
    constexpr explicit FlagSet(uint8_t bits) : bits_(bits & 0x3f) {}

    constexpr uint8_t bits() const { return bits_; }
    constexpr bool urg() const { return bits_ & kFlagUrg; }
    constexpr bool ack() const { return bits_ & kFlagAck; }
    constexpr bool psh() const { return bits_ & kFlagPsh; }
    constexpr bool rst() const { return bits_ & kFlagRst; }
    constexpr bool syn() const { return bits_ & kFlagSyn; }
    constexpr bool fin() const { return bits_ & kFlagFin; }

    /// Canonical text form: subset of "UAPRSF" in that fixed order.
    std::string render() const;

    constexpr bool operator==(const FlagSet&) const = default;

private:
    uint8_t bits_ = 0;
};

struct FlagParseError : std::invalid_argument {
    enum class Kind { UnknownFlagChar, DuplicateFlag };
    FlagParseError(Kind k, char c, const std::string& msg)
        : std::invalid_argument(msg), kind(k), offending(c) {}
    Kind kind;
    char offending;
};

/// Parses flag characters (any order, each at most once).
/// Throws FlagParseError on unknown or duplicated characters.
FlagSet parse_flags(const std::string& text);

enum class Proto : uint8_t { Tcp, IcmpEchoReq, IcmpEchoReply, IcmpOrigin };

enum class Label : uint8_t { Legit, Attack };

std::string proto_name(Proto p);
std::string label_name(Label l);

std::string ip_to_string(uint32_t ip);
/// Parses dotted-quad IPv4; throws std::invalid_argument on malformed input.
uint32_t parse_ip(const std::string& text);

/// One trace event: a TCP segment or an ICMP message.
/// TCP-only fields (ports, flags, seq, ackno) are zero for ICMP records.
struct PacketRecord {
    double ts = 0.0;
    Proto proto = Proto::Tcp;
    uint32_t src_ip = 0;
    uint32_t dst_ip = 0;
    uint16_t sport = 0;
    uint16_t dport = 0;
    FlagSet flags;
    uint32_t seq = 0;
    uint32_t ackno = 0;
    uint32_t payload_len = 0;
    std::optional<uint32_t> router_src;   // ICMP_ORIGIN only
    std::optional<uint64_t> probe_id;     // ICMP echo pair matching
    std::optional<Label> label;           // simulator ground truth

    bool operator==(const PacketRecord&) const = default;
};

struct Trace {
    std::vector<PacketRecord> records;

    bool operator==(const Trace&) const = default;
};

}  // namespace synflood
