#include "secgrid/wire.hpp"

namespace secgrid {

std::string_view msg_type_name(MsgType t) {
    switch (t) {
        case MsgType::AttnRequest: return "AttnRequest";
        case MsgType::AttnQuote: return "AttnQuote";
        case MsgType::GwHello: return "GwHello";
        case MsgType::CcHello: return "CcHello";
        case MsgType::TimeEcho: return "TimeEcho";
        case MsgType::CcAck: return "CcAck";
        case MsgType::Init: return "Init";
        case MsgType::InitWrapped: return "InitWrapped";
        case MsgType::GetInitKey: return "GetInitKey";
        case MsgType::InitKeyResp: return "InitKeyResp";
        case MsgType::Echo: return "Echo";
        case MsgType::EchoAck: return "EchoAck";
        case MsgType::Report: return "Report";
        case MsgType::ReportResp: return "ReportResp";
        case MsgType::CcWindow: return "CcWindow";
        case MsgType::CcWindowAck: return "CcWindowAck";
        case MsgType::RestartReportReq: return "RestartReportReq";
        case MsgType::RestartTimeReq: return "RestartTimeReq";
        case MsgType::RestartTimeResp: return "RestartTimeResp";
        case MsgType::InitDone: return "InitDone";
    }
    return "Unknown";
}

bool is_known_msg_type(std::uint8_t tag) {
    return tag >= 1 && tag <= static_cast<std::uint8_t>(MsgType::InitDone);
}

Bytes aad_with_seq(std::string_view base, std::uint64_t seq) {
    Bytes aad = to_bytes(base);
    put_u64(aad, seq);
    return aad;
}

Bytes aad_with_ctr(std::string_view base, std::uint64_t ctr) {
    Bytes aad = to_bytes(base);
    put_u64(aad, ctr);
    return aad;
}

void put_envelope(Bytes& out, const CipherEnvelope& env) {
    append(out, {env.iv.data(), env.iv.size()});
    put_u32(out, static_cast<std::uint32_t>(env.ciphertext.size()));
    append(out, as_view(env.ciphertext));
    append(out, {env.tag.data(), env.tag.size()});
}

std::optional<CipherEnvelope> read_envelope(ByteReader& r) {
    try {
        CipherEnvelope env;
        env.iv = r.take_array<12>();
        env.ciphertext = r.take_bytes(r.u32());
        env.tag = r.take_array<16>();
        return env;
    } catch (const std::out_of_range&) {
        return std::nullopt;
    }
}

Bytes encode_report_plain(const ReportPlain& p) {
    Bytes out;
    out.reserve(kReportPlainSize);
    put_u64(out, p.meter_id);
    put_u64(out, p.reading);
    append(out, {p.nonce.data(), p.nonce.size()});
    put_u64(out, p.ctr);
    return out;
}

std::optional<ReportPlain> decode_report_plain(ByteView raw) {
    if (raw.size() != kReportPlainSize) return std::nullopt;
    ByteReader r(raw);
    ReportPlain p;
    p.meter_id = r.u64();
    p.reading = r.u64();
    p.nonce = r.take_array<16>();
    p.ctr = r.u64();
    return p;
}

Bytes encode_report(const ReportWire& rep) {
    Bytes out;
    out.reserve(kReportBodySize);
    put_u64(out, rep.meter_id_clear);
    append(out, {rep.envelope.iv.data(), rep.envelope.iv.size()});
    append(out, as_view(rep.envelope.ciphertext));
    append(out, {rep.envelope.tag.data(), rep.envelope.tag.size()});
    return out;
}

std::optional<ReportWire> decode_report(ByteView body) {
    if (body.size() != kReportBodySize) return std::nullopt;
    ByteReader r(body);
    ReportWire rep;
    rep.meter_id_clear = r.u64();
    rep.envelope.iv = r.take_array<12>();
    rep.envelope.ciphertext = r.take_bytes(kReportPlainSize);
    rep.envelope.tag = r.take_array<16>();
    return rep;
}

Nonce nonce_plus_one(const Nonce& n) {
    Nonce out = n;
    for (int i = 15; i >= 0; --i) {
        if (++out[i] != 0) break;
    }
    return out;
}

}  // namespace secgrid
