#include "synflood/classify.hpp"

#include <limits>

#include "synflood/conn_table.hpp"

namespace synflood {

std::string phase_name(ConnPhase p) {
    switch (p) {
        case ConnPhase::Handshake: return "handshake";
        case ConnPhase::Conversation: return "conversation";
        case ConnPhase::Teardown: return "teardown";
        case ConnPhase::Any: return "any";
    }
    return "?";
}

ConnPhase parse_phase(const std::string& name) {
    if (name == "handshake") return ConnPhase::Handshake;
    if (name == "conversation") return ConnPhase::Conversation;
    if (name == "teardown") return ConnPhase::Teardown;
    if (name == "any") return ConnPhase::Any;
    throw std::invalid_argument("unknown phase: " + name);
}

std::string verdict_class_name(VerdictClass c) {
    switch (c) {
        case VerdictClass::Legal: return "LEGAL";
        case VerdictClass::Abnormal: return "ABNORMAL";
        case VerdictClass::Malicious: return "MALICIOUS";
    }
    return "?";
}

namespace {

constexpr const char* kFlagDetector = "FLAG_SCAN";
constexpr const char* kHeaderDetector = "HEADER_CHECK";

bool legal_in_phase(uint8_t bits, ConnPhase phase) {
    constexpr uint8_t S = kFlagSyn, A = kFlagAck, P = kFlagPsh, U = kFlagUrg, R = kFlagRst,
                      F = kFlagFin;
    switch (phase) {
        case ConnPhase::Handshake:
            return bits == S || bits == (S | A) || bits == A;
        case ConnPhase::Conversation:
            return bits == A || bits == (A | P) || bits == (A | U) || bits == (A | P | U);
        case ConnPhase::Teardown:
            return bits == (F | A) || bits == A || bits == (P | F | A) || bits == R ||
                   bits == (R | A);
        case ConnPhase::Any:
            return legal_in_phase(bits, ConnPhase::Handshake) ||
                   legal_in_phase(bits, ConnPhase::Conversation) ||
                   legal_in_phase(bits, ConnPhase::Teardown);
    }
    return false;
}

}  // namespace

Verdict classify_flags(FlagSet flags, ConnPhase phase) {
    if (flags.syn() && flags.fin())
        return {VerdictClass::Malicious, reason::kSynFin, kFlagDetector};
    if (flags.bits() == 0)
        return {VerdictClass::Abnormal, reason::kNullFlags, kFlagDetector};
    if (legal_in_phase(flags.bits(), phase))
        return {VerdictClass::Legal, reason::kNone, kFlagDetector};
    return {VerdictClass::Abnormal, reason::kIllegalCombo, kFlagDetector};
}

Verdict classify_header(const PacketRecord& pkt) {
    if (pkt.proto != Proto::Tcp)
        throw NotTcp("classify_header requires a TCP record");
    if (pkt.sport == 0 || pkt.dport == 0)
        return {VerdictClass::Abnormal, reason::kPortZero, kHeaderDetector};
    if (pkt.flags.ack() && pkt.ackno == 0)
        return {VerdictClass::Abnormal, reason::kAckZero, kHeaderDetector};
    if (pkt.flags == FlagSet(kFlagSyn) && pkt.payload_len > 0)
        return {VerdictClass::Abnormal, reason::kSynWithData, kHeaderDetector};
    return {VerdictClass::Legal, reason::kNone, kHeaderDetector};
}

std::vector<std::pair<size_t, Verdict>> scan_trace(const Trace& trace, PhaseSource phase_source) {
    std::vector<std::pair<size_t, Verdict>> out;
    // A passive tracker with an effectively unbounded backlog; only used to
    // derive per-packet phases in TRACKED mode.
    ConnTable tracker(TrackMode::Plain, std::numeric_limits<size_t>::max() / 2,
                      std::numeric_limits<double>::max() / 2);

    for (size_t i = 0; i < trace.records.size(); ++i) {
        const PacketRecord& pkt = trace.records[i];
        if (pkt.proto != Proto::Tcp) continue;

        Verdict verdict = classify_header(pkt);
        ConnPhase phase = ConnPhase::Any;
        bool header_ok = verdict.legal();

        if (phase_source == PhaseSource::Tracked && header_ok) {
            if (pkt.flags == FlagSet(kFlagSyn)) {
                tracker.admit_syn(pkt, pkt.ts);
                phase = ConnPhase::Handshake;
            } else {
                phase = tracker.on_packet(pkt, pkt.ts).phase_for_classifier;
            }
        }

        if (header_ok)
            verdict = classify_flags(pkt.flags, phase);
        if (!verdict.legal())
            out.emplace_back(i, verdict);
    }
    return out;
}

}  // namespace synflood
