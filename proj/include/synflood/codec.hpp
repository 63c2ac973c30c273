#pragma once

#include <cstddef>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "synflood/packet.hpp"

namespace synflood {

struct CodecError : std::runtime_error {
    enum class Kind { MalformedLine, InvariantViolation, DisorderedTimestamps };
    CodecError(Kind k, size_t line, const std::string& reason)
        : std::runtime_error("line " + std::to_string(line) + ": " + reason),
          kind(k),
          line_no(line) {}
    Kind kind;
    size_t line_no;
};

/// Renders one record as a single JSON object (no trailing newline).
/// Key order: ts, proto, src_ip, dst_ip, sport, dport, flags, seq, ackno,
/// len, router_src, probe_id, label; absent optionals omitted.
std::string encode_record(const PacketRecord& rec);

/// JSON Lines, one object per record, deterministic for a given trace.
std::string encode_trace(const Trace& trace);
void encode_trace(const Trace& trace, std::ostream& out);

/// Parses one JSON line; throws CodecError tagged with line_no.
PacketRecord decode_record(const std::string& line, size_t line_no);

/// Parses JSON Lines into a Trace, validating all record invariants.
/// Out-of-order timestamps are rejected unless lenient is set, in which
/// case the records are stable-sorted by ts.
Trace decode_trace(const std::string& text, bool lenient = false);
Trace decode_trace(std::istream& in, bool lenient = false);

Trace load_trace_file(const std::string& path, bool lenient = false);
void save_trace_file(const Trace& trace, const std::string& path);

}  // namespace synflood
