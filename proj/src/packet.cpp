#include "synflood/packet.hpp"

#include <array>
#include <cstdio>

namespace synflood {

std::string FlagSet::render() const {
    std::string out;
    if (urg()) out += 'U';
    if (ack()) out += 'A';
    if (psh()) out += 'P';
    if (rst()) out += 'R';
    if (syn()) out += 'S';
    if (fin()) out += 'F';
    return out;
}

FlagSet parse_flags(const std::string& text) {
    uint8_t bits = 0;
    for (char c : text) {
        uint8_t bit;
        switch (c) {
            case 'U': bit = kFlagUrg; break;
            case 'A': bit = kFlagAck; break;
            case 'P': bit = kFlagPsh; break;
            case 'R': bit = kFlagRst; break;
            case 'S': bit = kFlagSyn; break;
            case 'F': bit = kFlagFin; break;
            default:
                throw FlagParseError(FlagParseError::Kind::UnknownFlagChar, c,
                                     std::string("unknown flag character '") + c + "'");
        }
        if (bits & bit)
            throw FlagParseError(FlagParseError::Kind::DuplicateFlag, c,
                                 std::string("duplicate flag character '") + c + "'");
        bits |= bit;
    }
    return FlagSet(bits);
}

std::string proto_name(Proto p) {
    switch (p) {
        case Proto::Tcp: return "TCP";
        case Proto::IcmpEchoReq: return "ICMP_ECHO_REQ";
        case Proto::IcmpEchoReply: return "ICMP_ECHO_REPLY";
        case Proto::IcmpOrigin: return "ICMP_ORIGIN";
    }
    return "?";
}

std::string label_name(Label l) {
    return l == Label::Legit ? "LEGIT" : "ATTACK";
}

std::string ip_to_string(uint32_t ip) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%u.%u.%u.%u", (ip >> 24) & 0xff, (ip >> 16) & 0xff,
                  (ip >> 8) & 0xff, ip & 0xff);
    return buf;
}

uint32_t parse_ip(const std::string& text) {
    std::array<unsigned, 4> oct{};
    char extra;
    int n = std::sscanf(text.c_str(), "%u.%u.%u.%u%c", &oct[0], &oct[1], &oct[2], &oct[3], &extra);
    if (n != 4)
        throw std::invalid_argument("malformed IPv4 address: " + text);
    for (unsigned o : oct)
        if (o > 255)
            throw std::invalid_argument("IPv4 octet out of range: " + text);
    return (oct[0] << 24) | (oct[1] << 16) | (oct[2] << 8) | oct[3];
}

}  // namespace synflood
