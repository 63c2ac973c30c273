#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "synflood/packet.hpp"

namespace synflood {

enum class ConnPhase : uint8_t { Handshake, Conversation, Teardown, Any };

std::string phase_name(ConnPhase p);
/// Parses lowercase phase names (handshake/conversation/teardown/any).
ConnPhase parse_phase(const std::string& name);

enum class VerdictClass : uint8_t { Legal, Abnormal, Malicious };

std::string verdict_class_name(VerdictClass c);

// Fixed reason-code vocabulary; these strings appear in CLI output and
// alert files.
namespace reason {
inline constexpr const char* kNone = "NONE";
inline constexpr const char* kSynFin = "SYN_FIN";
inline constexpr const char* kNullFlags = "NULL_FLAGS";
inline constexpr const char* kPortZero = "PORT_ZERO";
inline constexpr const char* kAckZero = "ACK_ZERO";
inline constexpr const char* kSynWithData = "SYN_WITH_DATA";
inline constexpr const char* kIllegalCombo = "ILLEGAL_COMBO_FOR_PHASE";
}  // namespace reason

struct Verdict {
    VerdictClass cls = VerdictClass::Legal;
    std::string reason = reason::kNone;
    std::string detector;

    bool legal() const { return cls == VerdictClass::Legal; }
    bool operator==(const Verdict&) const = default;
};

struct NotTcp : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Flag-combination legality by connection phase. Total over all
/// 64 flag sets x 4 phases.
Verdict classify_flags(FlagSet flags, ConnPhase phase);

/// Header-field anomaly rules, evaluated in fixed order:
/// port zero, ack zero, SYN carrying data. Throws NotTcp for non-TCP.
Verdict classify_header(const PacketRecord& pkt);

enum class PhaseSource : uint8_t { StatelessAny, Tracked };

/// Applies header rules then flag rules to every TCP record; returns one
/// entry per non-LEGAL record. Tracked mode follows handshake state to
/// supply per-packet phases.
std::vector<std::pair<size_t, Verdict>> scan_trace(const Trace& trace, PhaseSource phase_source);

}  // namespace synflood
