#include <doctest.h>

#include "secgrid/wire.hpp"

using namespace secgrid;

TEST_CASE("report plaintext layout is exactly 40 big-endian bytes") {
    ReportPlain p;
    p.meter_id = 0x0102030405060708ull;
    p.reading = 0x1112131415161718ull;
    for (int i = 0; i < 16; ++i) p.nonce[i] = static_cast<std::uint8_t>(0xA0 + i);
    p.ctr = 0x2122232425262728ull;

    Bytes raw = encode_report_plain(p);
    REQUIRE(raw.size() == kReportPlainSize);
    CHECK(to_hex(as_view(raw)) ==
          "0102030405060708"
          "1112131415161718"
          "a0a1a2a3a4a5a6a7a8a9aaabacadaeaf"
          "2122232425262728");

    auto back = decode_report_plain(as_view(raw));
    REQUIRE(back.has_value());
    CHECK(*back == p);
    raw.pop_back();
    CHECK_FALSE(decode_report_plain(as_view(raw)).has_value());
}

TEST_CASE("report wire format is meter_id || iv || ct(40) || tag, 76 bytes") {
    Drbg rng(1, "wire");
    SymKey key = SymKey::generate(rng);
    AeadKey aead(key, iv_prefix(false, 0));
    ReportPlain p{7, 1500, {}, 3};
    rng.fill(p.nonce.data(), p.nonce.size());

    CipherEnvelope env =
        ae_encrypt(aead, as_view(encode_report_plain(p)), as_view(aad_bytes(kAadReport)));
    ReportWire wire{7, env};
    Bytes body = encode_report(wire);
    REQUIRE(body.size() == kReportBodySize);
    // clear meter id up front, big-endian
    CHECK(to_hex({body.data(), 8}) == "0000000000000007");
    // iv immediately after
    CHECK(std::equal(env.iv.begin(), env.iv.end(), body.begin() + 8));

    auto decoded = decode_report(as_view(body));
    REQUIRE(decoded.has_value());
    CHECK(decoded->meter_id_clear == 7);
    auto plain = ae_decrypt(key, decoded->envelope, as_view(aad_bytes(kAadReport)));
    REQUIRE(plain.has_value());
    CHECK(*decode_report_plain(as_view(*plain)) == p);

    Bytes wrong_len = body;
    wrong_len.push_back(0);
    CHECK_FALSE(decode_report(as_view(wrong_len)).has_value());
}

TEST_CASE("generic envelope codec round trips and rejects truncation") {
    Drbg rng(2, "wire");
    SymKey key = SymKey::generate(rng);
    AeadKey aead(key, iv_prefix(true, 3));
    Bytes msg = rng.bytes(33);
    CipherEnvelope env = ae_encrypt(aead, as_view(msg), as_view(aad_bytes(kAadEcho)));

    Bytes out;
    put_envelope(out, env);
    REQUIRE(out.size() == 12 + 4 + 33 + 16);
    ByteReader r(as_view(out));
    auto back = read_envelope(r);
    REQUIRE(back.has_value());
    CHECK(back->iv == env.iv);
    CHECK(back->ciphertext == env.ciphertext);
    CHECK(back->tag == env.tag);

    out.pop_back();
    ByteReader r2(as_view(out));
    CHECK_FALSE(read_envelope(r2).has_value());
}

TEST_CASE("nonce_plus_one is 16-byte big-endian increment with carry") {
    Nonce n{};
    Nonce n1 = nonce_plus_one(n);
    CHECK(n1[15] == 1);

    Nonce carry{};
    carry.fill(0xFF);
    Nonce wrapped = nonce_plus_one(carry);
    for (auto b : wrapped) CHECK(b == 0);

    Nonce mid{};
    mid[15] = 0xFF;
    Nonce bumped = nonce_plus_one(mid);
    CHECK(bumped[14] == 1);
    CHECK(bumped[15] == 0);
}

TEST_CASE("stream and response aads bind their sequence numbers") {
    CHECK(aad_with_seq(kAadCcStream, 1) != aad_with_seq(kAadCcStream, 2));
    CHECK(aad_with_ctr(kAadReportResp, 5) != aad_with_ctr(kAadReportResp, 6));
    Bytes aad = aad_with_seq(kAadCcStream, 0x0102030405060708ull);
    CHECK(aad.size() == std::string_view(kAadCcStream).size() + 8);
    CHECK(to_hex({aad.data() + aad.size() - 8, 8}) == "0102030405060708");
}

TEST_CASE("message type names map both ways") {
    CHECK(msg_type_name(MsgType::Report) == "Report");
    CHECK(is_known_msg_type(13));
    CHECK_FALSE(is_known_msg_type(0));
    CHECK_FALSE(is_known_msg_type(99));
}
