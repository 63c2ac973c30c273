#include "synflood/codec.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "synflood/util.hpp"

namespace synflood {

using ordered_json = nlohmann::ordered_json;

std::string encode_record(const PacketRecord& rec) {
    ordered_json j;
    j["ts"] = rec.ts;
    j["proto"] = proto_name(rec.proto);
    j["src_ip"] = ip_to_string(rec.src_ip);
    j["dst_ip"] = ip_to_string(rec.dst_ip);
    if (rec.proto == Proto::Tcp) {
        j["sport"] = rec.sport;
        j["dport"] = rec.dport;
        j["flags"] = rec.flags.render();
        j["seq"] = rec.seq;
        j["ackno"] = rec.ackno;
    }
    j["len"] = rec.payload_len;
    if (rec.router_src) j["router_src"] = ip_to_string(*rec.router_src);
    if (rec.probe_id) j["probe_id"] = *rec.probe_id;
    if (rec.label) j["label"] = label_name(*rec.label);
    return j.dump();
}

std::string encode_trace(const Trace& trace) {
    std::string out;
    for (const auto& rec : trace.records) {
        out += encode_record(rec);
        out += '\n';
    }
    return out;
}

void encode_trace(const Trace& trace, std::ostream& out) {
    for (const auto& rec : trace.records)
        out << encode_record(rec) << '\n';
}

namespace {

Proto parse_proto(const std::string& name, size_t line_no) {
    if (name == "TCP") return Proto::Tcp;
    if (name == "ICMP_ECHO_REQ") return Proto::IcmpEchoReq;
    if (name == "ICMP_ECHO_REPLY") return Proto::IcmpEchoReply;
    if (name == "ICMP_ORIGIN") return Proto::IcmpOrigin;
    throw CodecError(CodecError::Kind::MalformedLine, line_no, "unknown proto: " + name);
}

uint16_t parse_port(const ordered_json& v, const char* name, size_t line_no) {
    if (!v.is_number_unsigned() && !v.is_number_integer())
        throw CodecError(CodecError::Kind::MalformedLine, line_no,
                         std::string(name) + " is not an integer");
    int64_t n = v.get<int64_t>();
    if (n < 0 || n > 65535)
        throw CodecError(CodecError::Kind::InvariantViolation, line_no,
                         std::string(name) + " out of range: " + std::to_string(n));
    return static_cast<uint16_t>(n);
}

uint32_t parse_u32(const ordered_json& v, const char* name, size_t line_no) {
    if (!v.is_number_unsigned() && !v.is_number_integer())
        throw CodecError(CodecError::Kind::MalformedLine, line_no,
                         std::string(name) + " is not an integer");
    int64_t n = v.get<int64_t>();
    if (n < 0 || n > 0xffffffffLL)
        throw CodecError(CodecError::Kind::InvariantViolation, line_no,
                         std::string(name) + " out of range: " + std::to_string(n));
    return static_cast<uint32_t>(n);
}

const ordered_json& require(const ordered_json& j, const char* key, size_t line_no) {
    auto it = j.find(key);
    if (it == j.end())
        throw CodecError(CodecError::Kind::MalformedLine, line_no,
                         std::string("missing required key: ") + key);
    return *it;
}

void forbid(const ordered_json& j, const char* key, const char* why, size_t line_no) {
    if (j.contains(key))
        throw CodecError(CodecError::Kind::InvariantViolation, line_no,
                         std::string(key) + " not allowed " + why);
}

}  // namespace

PacketRecord decode_record(const std::string& line, size_t line_no) {
    ordered_json j;
    try {
        j = ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw CodecError(CodecError::Kind::MalformedLine, line_no, e.what());
    }
    if (!j.is_object())
        throw CodecError(CodecError::Kind::MalformedLine, line_no, "not a JSON object");

    PacketRecord rec;
    const auto& ts = require(j, "ts", line_no);
    if (!ts.is_number())
        throw CodecError(CodecError::Kind::MalformedLine, line_no, "ts is not a number");
    rec.ts = ts.get<double>();
    if (rec.ts < 0)
        throw CodecError(CodecError::Kind::InvariantViolation, line_no, "negative ts");

    const auto& proto = require(j, "proto", line_no);
    if (!proto.is_string())
        throw CodecError(CodecError::Kind::MalformedLine, line_no, "proto is not a string");
    rec.proto = parse_proto(proto.get<std::string>(), line_no);

    try {
        rec.src_ip = parse_ip(require(j, "src_ip", line_no).get<std::string>());
        rec.dst_ip = parse_ip(require(j, "dst_ip", line_no).get<std::string>());
    } catch (const nlohmann::json::exception&) {
        throw CodecError(CodecError::Kind::MalformedLine, line_no, "address is not a string");
    } catch (const std::invalid_argument& e) {
        throw CodecError(CodecError::Kind::InvariantViolation, line_no, e.what());
    }

    rec.payload_len = parse_u32(require(j, "len", line_no), "len", line_no);

    if (rec.proto == Proto::Tcp) {
        rec.sport = parse_port(require(j, "sport", line_no), "sport", line_no);
        rec.dport = parse_port(require(j, "dport", line_no), "dport", line_no);
        const auto& flags = require(j, "flags", line_no);
        if (!flags.is_string())
            throw CodecError(CodecError::Kind::MalformedLine, line_no, "flags is not a string");
        try {
            rec.flags = parse_flags(flags.get<std::string>());
        } catch (const FlagParseError& e) {
            throw CodecError(CodecError::Kind::InvariantViolation, line_no, e.what());
        }
        rec.seq = parse_u32(require(j, "seq", line_no), "seq", line_no);
        rec.ackno = parse_u32(require(j, "ackno", line_no), "ackno", line_no);
        forbid(j, "router_src", "on TCP records", line_no);
        forbid(j, "probe_id", "on TCP records", line_no);
    } else {
        for (const char* key : {"sport", "dport", "flags", "seq", "ackno"})
            forbid(j, key, "on ICMP records", line_no);
        if (rec.proto == Proto::IcmpOrigin) {
            forbid(j, "probe_id", "on ICMP_ORIGIN records", line_no);
            try {
                rec.router_src = parse_ip(require(j, "router_src", line_no).get<std::string>());
            } catch (const nlohmann::json::exception&) {
                throw CodecError(CodecError::Kind::MalformedLine, line_no,
                                 "router_src is not a string");
            } catch (const std::invalid_argument& e) {
                throw CodecError(CodecError::Kind::InvariantViolation, line_no, e.what());
            }
        } else {
            forbid(j, "router_src", "on ICMP echo records", line_no);
            const auto& pid = require(j, "probe_id", line_no);
            if (!pid.is_number_unsigned())
                throw CodecError(CodecError::Kind::MalformedLine, line_no,
                                 "probe_id is not an unsigned integer");
            rec.probe_id = pid.get<uint64_t>();
        }
    }

    if (auto it = j.find("label"); it != j.end()) {
        if (!it->is_string())
            throw CodecError(CodecError::Kind::MalformedLine, line_no, "label is not a string");
        std::string name = it->get<std::string>();
        if (name == "LEGIT")
            rec.label = Label::Legit;
        else if (name == "ATTACK")
            rec.label = Label::Attack;
        else
            throw CodecError(CodecError::Kind::InvariantViolation, line_no,
                             "unknown label: " + name);
    }
    return rec;
}

Trace decode_trace(std::istream& in, bool lenient) {
    Trace trace;
    std::string line;
    size_t line_no = 0;
    bool disordered = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        PacketRecord rec = decode_record(line, line_no);
        if (!trace.records.empty() && rec.ts < trace.records.back().ts) {
            if (!lenient)
                throw CodecError(CodecError::Kind::DisorderedTimestamps, line_no,
                                 "timestamp goes backwards");
            disordered = true;
        }
        trace.records.push_back(std::move(rec));
    }
    if (disordered)
        std::stable_sort(trace.records.begin(), trace.records.end(),
                         [](const PacketRecord& a, const PacketRecord& b) { return a.ts < b.ts; });
    return trace;
}

Trace decode_trace(const std::string& text, bool lenient) {
    std::istringstream in(text);
    return decode_trace(in, lenient);
}

Trace load_trace_file(const std::string& path, bool lenient) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open trace: " + path);
    return decode_trace(in, lenient);
}

void save_trace_file(const Trace& trace, const std::string& path) {
    atomic_write_file(path, encode_trace(trace));
}

}  // namespace synflood
