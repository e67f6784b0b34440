#pragma once

#include <optional>
#include <string_view>

#include "secgrid/crypto.hpp"

namespace secgrid {

// On the wire every message is type_tag(1) || body. Bodies use big-endian
// integers and length-prefixed envelopes throughout.
enum class MsgType : std::uint8_t {
    AttnRequest = 1,
    AttnQuote = 2,
    GwHello = 3,
    CcHello = 4,
    TimeEcho = 5,
    CcAck = 6,
    Init = 7,
    InitWrapped = 8,
    GetInitKey = 9,
    InitKeyResp = 10,
    Echo = 11,
    EchoAck = 12,
    Report = 13,
    ReportResp = 14,
    CcWindow = 15,
    CcWindowAck = 16,
    RestartReportReq = 17,
    RestartTimeReq = 18,
    RestartTimeResp = 19,
    InitDone = 20,  // notification only; not part of the keyed exchange
};

std::string_view msg_type_name(MsgType t);
bool is_known_msg_type(std::uint8_t tag);

// Associated-data strings; every envelope is domain-separated by one.
inline constexpr std::string_view kAadReport = "secgrid/report/v1";
inline constexpr std::string_view kAadInit = "secgrid/init/v1";
inline constexpr std::string_view kAadInitWrap = "secgrid/initwrap/v1";
inline constexpr std::string_view kAadEcho = "secgrid/echo/v1";
inline constexpr std::string_view kAadAck = "secgrid/ack/v1";
inline constexpr std::string_view kAadTimeEcho = "secgrid/timeecho/v1";
inline constexpr std::string_view kAadCcAck = "secgrid/ccack/v1";
inline constexpr std::string_view kAadCcStream = "secgrid/cc/v1";
inline constexpr std::string_view kAadCcRespStream = "secgrid/ccresp/v1";
inline constexpr std::string_view kAadReportResp = "secgrid/resp/v1";
inline constexpr std::string_view kAadRestartReq = "secgrid/restartreq/v1";

inline Bytes aad_bytes(std::string_view s) { return to_bytes(s); }

// Stream AAD: base || seq(u64 BE), binding ciphertexts to their slot.
Bytes aad_with_seq(std::string_view base, std::uint64_t seq);
// Response AAD: base || ctr(u64 BE), binding a response to the report it answers.
Bytes aad_with_ctr(std::string_view base, std::uint64_t ctr);

// Generic envelope codec: iv(12) || ct_len(u32 BE) || ct || tag(16).
void put_envelope(Bytes& out, const CipherEnvelope& env);
std::optional<CipherEnvelope> read_envelope(ByteReader& r);

// --- periodic report (bit-exact) -------------------------------------------
// body     = meter_id(u64 BE) || iv(12) || ct(40) || tag(16)   [76 bytes]
// plaintext = meter_id(u64 BE) || reading(u64 BE) || nonce(16) || ctr(u64 BE)

using Nonce = std::array<std::uint8_t, 16>;

struct ReportPlain {
    std::uint64_t meter_id = 0;
    std::uint64_t reading = 0;
    Nonce nonce{};
    std::uint64_t ctr = 0;

    bool operator==(const ReportPlain&) const = default;
};

constexpr std::size_t kReportPlainSize = 40;
constexpr std::size_t kReportBodySize = 76;

Bytes encode_report_plain(const ReportPlain& p);
std::optional<ReportPlain> decode_report_plain(ByteView raw);

struct ReportWire {
    std::uint64_t meter_id_clear = 0;
    CipherEnvelope envelope;  // ct is exactly 40 bytes
};

Bytes encode_report(const ReportWire& r);
std::optional<ReportWire> decode_report(ByteView body);

// 16-byte big-endian increment, used for the Echo/Ack nonce+1 check.
Nonce nonce_plus_one(const Nonce& n);

}  // namespace secgrid
