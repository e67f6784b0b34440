#include "secgrid/crypto.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/rand.h>
#include <openssl/sha.h>

#include <cstring>
#include <set>
#include <utility>

namespace secgrid {

namespace {

[[noreturn]] void fail(const char* what) { throw std::runtime_error(std::string("crypto: ") + what); }

struct EvpCipherCtx {
    EVP_CIPHER_CTX* p;
    EvpCipherCtx() : p(EVP_CIPHER_CTX_new()) {
        if (!p) fail("EVP_CIPHER_CTX_new");
    }
    ~EvpCipherCtx() { EVP_CIPHER_CTX_free(p); }
};

struct EvpPkey {
    EVP_PKEY* p = nullptr;
    ~EvpPkey() { EVP_PKEY_free(p); }
};

struct EvpMdCtx {
    EVP_MD_CTX* p;
    EvpMdCtx() : p(EVP_MD_CTX_new()) {
        if (!p) fail("EVP_MD_CTX_new");
    }
    ~EvpMdCtx() { EVP_MD_CTX_free(p); }
};

}  // namespace

Hash256 sha256(ByteView data) {
    Hash256 out;
    SHA256(data.data(), data.size(), out.data());
    return out;
}

Hash256 sha256(std::initializer_list<ByteView> parts) {
    SHA256_CTX ctx;
    SHA256_Init(&ctx);
    for (const auto& p : parts) SHA256_Update(&ctx, p.data(), p.size());
    Hash256 out;
    SHA256_Final(out.data(), &ctx);
    return out;
}

Bytes hkdf_sha256(ByteView ikm, ByteView salt, ByteView info, std::size_t length) {
    // extract
    unsigned int prk_len = 0;
    std::uint8_t prk[32];
    if (!HMAC(EVP_sha256(), salt.data(), static_cast<int>(salt.size()), ikm.data(), ikm.size(),
              prk, &prk_len))
        fail("hkdf extract");
    // expand
    Bytes out;
    out.reserve(length);
    Bytes t;
    std::uint8_t counter = 1;
    while (out.size() < length) {
        Bytes block = t;
        append(block, info);
        block.push_back(counter++);
        std::uint8_t digest[32];
        unsigned int digest_len = 0;
        if (!HMAC(EVP_sha256(), prk, static_cast<int>(prk_len), block.data(), block.size(), digest,
                  &digest_len))
            fail("hkdf expand");
        t.assign(digest, digest + 32);
        std::size_t take = std::min<std::size_t>(32, length - out.size());
        out.insert(out.end(), digest, digest + take);
    }
    return out;
}

// --- randomness ---------------------------------------------------------

std::uint64_t RandomSource::next_u64() {
    std::uint8_t buf[8];
    fill(buf, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = v << 8 | buf[i];
    return v;
}

std::uint64_t RandomSource::uniform(std::uint64_t bound) {
    if (bound == 0) fail("uniform(0)");
    // rejection sampling over the largest multiple of bound
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return v % bound;
}

Bytes RandomSource::bytes(std::size_t n) {
    Bytes out(n);
    if (n) fill(out.data(), n);
    return out;
}

void SystemRandom::fill(std::uint8_t* out, std::size_t n) {
    if (n && RAND_bytes(out, static_cast<int>(n)) != 1) fail("RAND_bytes");
}

struct Drbg::Impl {
    EvpCipherCtx ctx;
};

Drbg::Drbg(std::uint64_t seed, std::string_view stream) : impl_(std::make_unique<Impl>()) {
    Bytes seed_material = to_bytes("secgrid/drbg/v1");
    put_u64(seed_material, seed);
    seed_material.push_back('/');
    append(seed_material, to_bytes(stream));
    Hash256 key = sha256(as_view(seed_material));
    std::uint8_t iv[16] = {0};
    if (EVP_EncryptInit_ex(impl_->ctx.p, EVP_chacha20(), nullptr, key.data(), iv) != 1)
        fail("chacha init");
}

Drbg::~Drbg() = default;

void Drbg::fill(std::uint8_t* out, std::size_t n) {
    if (!n) return;
    // keystream = encryption of zeros
    std::memset(out, 0, n);
    int len = 0;
    if (EVP_EncryptUpdate(impl_->ctx.p, out, &len, out, static_cast<int>(n)) != 1)
        fail("chacha update");
}

// --- AES-128-GCM ----------------------------------------------------------

SymKey SymKey::generate(RandomSource& rng) {
    SymKey k;
    rng.fill(k.bytes.data(), k.bytes.size());
    return k;
}

SymKey SymKey::from_bytes(ByteView raw) {
    if (raw.size() != 16) fail("SymKey must be 16 bytes");
    SymKey k;
    std::memcpy(k.bytes.data(), raw.data(), 16);
    return k;
}

AeadKey::AeadKey(SymKey key, std::uint32_t prefix) : key_(key), prefix_(prefix), count_(0) {}

AeadKey::AeadKey(AeadKey&& other) noexcept
    : key_(other.key_), prefix_(other.prefix_), count_(other.count_) {}

AeadKey& AeadKey::operator=(AeadKey&& other) noexcept {
    key_ = other.key_;
    prefix_ = other.prefix_;
    count_ = other.count_;
    return *this;
}

std::array<std::uint8_t, 12> AeadKey::next_iv() {
    std::lock_guard lock(mu_);
    if (count_ == UINT64_MAX) throw IvExhausted();
    ++count_;  // first issued value is 1; 0 stays reserved
    std::array<std::uint8_t, 12> iv;
    for (int i = 0; i < 4; ++i) iv[i] = static_cast<std::uint8_t>(prefix_ >> (24 - 8 * i));
    for (int i = 0; i < 8; ++i) iv[4 + i] = static_cast<std::uint8_t>(count_ >> (56 - 8 * i));
    return iv;
}

void AeadKey::set_counter_for_test(std::uint64_t value) {
    std::lock_guard lock(mu_);
    count_ = value;
}

namespace {

struct IvAuditState {
    std::mutex mu;
    bool enabled = false;
    std::set<std::pair<std::array<std::uint8_t, 8>, std::array<std::uint8_t, 12>>> seen;
    std::size_t dups = 0;
    std::size_t total = 0;
};

IvAuditState& iv_audit() {
    static IvAuditState s;
    return s;
}

}  // namespace

void IvAuditor::enable() {
    std::lock_guard lock(iv_audit().mu);
    iv_audit().enabled = true;
}

void IvAuditor::disable() {
    std::lock_guard lock(iv_audit().mu);
    iv_audit().enabled = false;
}

void IvAuditor::reset() {
    std::lock_guard lock(iv_audit().mu);
    iv_audit().seen.clear();
    iv_audit().dups = 0;
    iv_audit().total = 0;
}

std::size_t IvAuditor::duplicates() {
    std::lock_guard lock(iv_audit().mu);
    return iv_audit().dups;
}

std::size_t IvAuditor::recorded() {
    std::lock_guard lock(iv_audit().mu);
    return iv_audit().total;
}

void IvAuditor::record(const SymKey& key, const std::array<std::uint8_t, 12>& iv) {
    auto& s = iv_audit();
    std::lock_guard lock(s.mu);
    if (!s.enabled) return;
    Hash256 fp = sha256(key.view());
    std::array<std::uint8_t, 8> short_fp;
    std::memcpy(short_fp.data(), fp.data(), 8);
    ++s.total;
    if (!s.seen.emplace(short_fp, iv).second) ++s.dups;
}

static CipherEnvelope gcm_encrypt(const SymKey& key, const std::array<std::uint8_t, 12>& iv,
                                  ByteView plaintext, ByteView aad) {
    CipherEnvelope env;
    env.iv = iv;
    env.aad.assign(aad.begin(), aad.end());

    EvpCipherCtx ctx;
    if (EVP_EncryptInit_ex(ctx.p, EVP_aes_128_gcm(), nullptr, key.bytes.data(), env.iv.data()) != 1)
        fail("gcm encrypt init");
    int len = 0;
    if (!aad.empty() &&
        EVP_EncryptUpdate(ctx.p, nullptr, &len, aad.data(), static_cast<int>(aad.size())) != 1)
        fail("gcm aad");
    env.ciphertext.resize(plaintext.size());
    if (!plaintext.empty() &&
        EVP_EncryptUpdate(ctx.p, env.ciphertext.data(), &len, plaintext.data(),
                          static_cast<int>(plaintext.size())) != 1)
        fail("gcm update");
    if (EVP_EncryptFinal_ex(ctx.p, env.ciphertext.data() + plaintext.size(), &len) != 1)
        fail("gcm final");
    if (EVP_CIPHER_CTX_ctrl(ctx.p, EVP_CTRL_GCM_GET_TAG, 16, env.tag.data()) != 1)
        fail("gcm tag");
    return env;
}

CipherEnvelope ae_encrypt(AeadKey& key, ByteView plaintext, ByteView aad) {
    std::array<std::uint8_t, 12> iv = key.next_iv();
    IvAuditor::record(key.key(), iv);
    return gcm_encrypt(key.key(), iv, plaintext, aad);
}

CipherEnvelope ae_encrypt_with_iv(const SymKey& key, const std::array<std::uint8_t, 12>& iv,
                                  ByteView plaintext, ByteView aad) {
    return gcm_encrypt(key, iv, plaintext, aad);
}

std::optional<Bytes> ae_decrypt(const SymKey& key, const CipherEnvelope& env, ByteView aad) {
    EvpCipherCtx ctx;
    if (EVP_DecryptInit_ex(ctx.p, EVP_aes_128_gcm(), nullptr, key.bytes.data(), env.iv.data()) != 1)
        fail("gcm decrypt init");
    int len = 0;
    if (!aad.empty() &&
        EVP_DecryptUpdate(ctx.p, nullptr, &len, aad.data(), static_cast<int>(aad.size())) != 1)
        fail("gcm aad");
    Bytes plaintext(env.ciphertext.size());
    if (!env.ciphertext.empty() &&
        EVP_DecryptUpdate(ctx.p, plaintext.data(), &len, env.ciphertext.data(),
                          static_cast<int>(env.ciphertext.size())) != 1)
        return std::nullopt;
    std::array<std::uint8_t, 16> tag = env.tag;
    if (EVP_CIPHER_CTX_ctrl(ctx.p, EVP_CTRL_GCM_SET_TAG, 16, tag.data()) != 1)
        fail("gcm set tag");
    if (EVP_DecryptFinal_ex(ctx.p, plaintext.data() + plaintext.size(), &len) != 1)
        return std::nullopt;  // AuthFailure: no partial plaintext released
    return plaintext;
}

// --- Ed25519 ----------------------------------------------------------------

SignKeypair SignKeypair::generate(RandomSource& rng) {
    std::array<std::uint8_t, 32> seed;
    rng.fill(seed.data(), seed.size());
    return from_seed({seed.data(), seed.size()});
}

SignKeypair SignKeypair::from_seed(ByteView seed32) {
    if (seed32.size() != 32) fail("ed25519 seed must be 32 bytes");
    EvpPkey pkey;
    pkey.p = EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, seed32.data(), 32);
    if (!pkey.p) fail("ed25519 keygen");
    SignKeypair kp;
    std::memcpy(kp.secret_key.data(), seed32.data(), 32);
    std::size_t publen = 32;
    if (EVP_PKEY_get_raw_public_key(pkey.p, kp.public_key.data(), &publen) != 1 || publen != 32)
        fail("ed25519 public key");
    return kp;
}

Signature sign(const SignKeypair& kp, ByteView message) {
    EvpPkey pkey;
    pkey.p = EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, kp.secret_key.data(), 32);
    if (!pkey.p) fail("ed25519 load");
    EvpMdCtx md;
    if (EVP_DigestSignInit(md.p, nullptr, nullptr, nullptr, pkey.p) != 1) fail("sign init");
    std::size_t siglen = 64;
    Signature sig(siglen);
    if (EVP_DigestSign(md.p, sig.data(), &siglen, message.data(), message.size()) != 1)
        fail("sign");
    sig.resize(siglen);
    return sig;
}

bool verify(const std::array<std::uint8_t, 32>& public_key, ByteView message, ByteView sig) {
    if (sig.size() != 64) return false;
    EvpPkey pkey;
    pkey.p = EVP_PKEY_new_raw_public_key(EVP_PKEY_ED25519, nullptr, public_key.data(), 32);
    if (!pkey.p) return false;
    EvpMdCtx md;
    if (EVP_DigestVerifyInit(md.p, nullptr, nullptr, nullptr, pkey.p) != 1) return false;
    return EVP_DigestVerify(md.p, sig.data(), sig.size(), message.data(), message.size()) == 1;
}

// --- X25519 ------------------------------------------------------------------

std::pair<DhSecret, DhShare> dh_generate(RandomSource& rng) {
    DhSecret secret;
    rng.fill(secret.bytes.data(), secret.bytes.size());
    EvpPkey pkey;
    pkey.p = EVP_PKEY_new_raw_private_key(EVP_PKEY_X25519, nullptr, secret.bytes.data(), 32);
    if (!pkey.p) fail("x25519 keygen");
    DhShare share;
    std::size_t publen = 32;
    if (EVP_PKEY_get_raw_public_key(pkey.p, share.bytes.data(), &publen) != 1 || publen != 32)
        fail("x25519 public");
    return {secret, share};
}

std::optional<DhShare> dh_generate_public(const DhSecret& secret) {
    EvpPkey pkey;
    pkey.p = EVP_PKEY_new_raw_private_key(EVP_PKEY_X25519, nullptr, secret.bytes.data(), 32);
    if (!pkey.p) return std::nullopt;
    DhShare share;
    std::size_t publen = 32;
    if (EVP_PKEY_get_raw_public_key(pkey.p, share.bytes.data(), &publen) != 1 || publen != 32)
        return std::nullopt;
    return share;
}

std::optional<SharedSecret> dh_combine(const DhSecret& secret, const DhShare& peer) {
    EvpPkey mine;
    mine.p = EVP_PKEY_new_raw_private_key(EVP_PKEY_X25519, nullptr, secret.bytes.data(), 32);
    if (!mine.p) return std::nullopt;
    EvpPkey theirs;
    theirs.p = EVP_PKEY_new_raw_public_key(EVP_PKEY_X25519, nullptr, peer.bytes.data(), 32);
    if (!theirs.p) return std::nullopt;

    EVP_PKEY_CTX* ctx = EVP_PKEY_CTX_new(mine.p, nullptr);
    if (!ctx) return std::nullopt;
    SharedSecret out;
    std::size_t outlen = 32;
    bool ok = EVP_PKEY_derive_init(ctx) == 1 && EVP_PKEY_derive_set_peer(ctx, theirs.p) == 1 &&
              EVP_PKEY_derive(ctx, out.bytes.data(), &outlen) == 1 && outlen == 32;
    EVP_PKEY_CTX_free(ctx);
    if (!ok) return std::nullopt;
    // RFC 7748: an all-zero shared secret marks a low-order peer element.
    std::uint8_t acc = 0;
    for (auto b : out.bytes) acc |= b;
    if (acc == 0) return std::nullopt;
    return out;
}

SymKey kdf_session(const SharedSecret& ss, ByteView context) {
    Bytes salt = to_bytes("secgrid/kdf/v1");
    Bytes okm = hkdf_sha256(ss.view(), as_view(salt), context, 16);
    return SymKey::from_bytes(as_view(okm));
}

}  // namespace secgrid
