#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include "secgrid/bytes.hpp"

namespace secgrid {

Hash256 sha256(ByteView data);
Hash256 sha256(std::initializer_list<ByteView> parts);

// HKDF-SHA256 (RFC 5869), extract-then-expand.
Bytes hkdf_sha256(ByteView ikm, ByteView salt, ByteView info, std::size_t length);

// --- randomness ---------------------------------------------------------

class RandomSource {
public:
    virtual ~RandomSource() = default;
    virtual void fill(std::uint8_t* out, std::size_t n) = 0;

    std::uint64_t next_u64();
    // Unbiased draw in [0, bound); bound must be nonzero.
    std::uint64_t uniform(std::uint64_t bound);
    Bytes bytes(std::size_t n);
};

// OS randomness (RAND_bytes).
class SystemRandom final : public RandomSource {
public:
    void fill(std::uint8_t* out, std::size_t n) override;
};

// Deterministic bit generator: ChaCha20 keystream keyed from
// SHA-256("secgrid/drbg/v1" || seed || "/" || stream). Every random choice a
// simulation makes flows through one of these so a (config, script, seed)
// triple replays bit-for-bit.
class Drbg final : public RandomSource {
public:
    Drbg(std::uint64_t seed, std::string_view stream);
    ~Drbg() override;
    Drbg(const Drbg&) = delete;
    Drbg& operator=(const Drbg&) = delete;

    void fill(std::uint8_t* out, std::size_t n) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// --- authenticated encryption (AES-128-GCM) ------------------------------

struct SymKey {
    std::array<std::uint8_t, 16> bytes{};

    static SymKey generate(RandomSource& rng);
    static SymKey from_bytes(ByteView raw);

    bool operator==(const SymKey&) const = default;
    ByteView view() const { return {bytes.data(), bytes.size()}; }
};

struct CipherEnvelope {
    std::array<std::uint8_t, 12> iv{};
    Bytes ciphertext;
    std::array<std::uint8_t, 16> tag{};
    Bytes aad;

    bool operator==(const CipherEnvelope&) const = default;
};

// An encryption handle: key plus its 96-bit IV counter. The counter is
// structured as prefix(32) || count(64) where the prefix carries a lane bit
// and the owning enclave's boot epoch, so two writers sharing one key (the
// meter and the gateway both encrypt under K_i) and re-created enclaves can
// never collide on (key, iv). Count starts at 1; 0 is reserved.
class AeadKey {
public:
    AeadKey(SymKey key, std::uint32_t iv_prefix);
    AeadKey(AeadKey&& other) noexcept;
    AeadKey& operator=(AeadKey&& other) noexcept;
    AeadKey(const AeadKey&) = delete;
    AeadKey& operator=(const AeadKey&) = delete;

    const SymKey& key() const { return key_; }
    std::uint32_t iv_prefix() const { return prefix_; }

    // Claims the next IV; throws IvExhausted once the 64-bit count wraps.
    std::array<std::uint8_t, 12> next_iv();

    // Test hook for the exhaustion path.
    void set_counter_for_test(std::uint64_t value);

private:
    SymKey key_;
    std::uint32_t prefix_;
    std::uint64_t count_;
    std::mutex mu_;
};

struct IvExhausted : std::runtime_error {
    IvExhausted() : std::runtime_error("aead iv counter exhausted; key must be rotated") {}
};

// Lane bit for the high IV word: distinguishes the two directions of a
// shared symmetric key. Enclave-side keys also fold in the boot epoch.
inline std::uint32_t iv_prefix(bool high_lane, std::uint32_t epoch = 0) {
    return (high_lane ? 0x80000000u : 0u) | (epoch & 0x7FFFFFFFu);
}

CipherEnvelope ae_encrypt(AeadKey& key, ByteView plaintext, ByteView aad);
// AuthFailure is the nullopt return: a single opaque signal with no detail.
std::optional<Bytes> ae_decrypt(const SymKey& key, const CipherEnvelope& env, ByteView aad);

// Caller-supplied IV, bypassing the counter discipline. Exists for known-
// answer vectors; production paths go through AeadKey.
CipherEnvelope ae_encrypt_with_iv(const SymKey& key, const std::array<std::uint8_t, 12>& iv,
                                  ByteView plaintext, ByteView aad);

// Test-build recorder asserting that no (key, iv) pair ever repeats within a
// process. Disabled by default; tests enable it around whole simulations.
class IvAuditor {
public:
    static void enable();
    static void disable();
    static void reset();
    static std::size_t duplicates();
    static std::size_t recorded();
    static void record(const SymKey& key, const std::array<std::uint8_t, 12>& iv);
};

// --- signatures (Ed25519) -------------------------------------------------

using Signature = Bytes;  // 64 bytes when well-formed

struct SignKeypair {
    std::array<std::uint8_t, 32> public_key{};
    std::array<std::uint8_t, 32> secret_key{};

    static SignKeypair generate(RandomSource& rng);
    static SignKeypair from_seed(ByteView seed32);
};

Signature sign(const SignKeypair& kp, ByteView message);
// Malformed or wrong signatures report false, never throw.
bool verify(const std::array<std::uint8_t, 32>& public_key, ByteView message, ByteView sig);

// --- key agreement (X25519) ------------------------------------------------

struct DhShare {
    std::array<std::uint8_t, 32> bytes{};
    bool operator==(const DhShare&) const = default;
};

struct DhSecret {
    std::array<std::uint8_t, 32> bytes{};
};

struct SharedSecret {
    std::array<std::uint8_t, 32> bytes{};
    bool operator==(const SharedSecret&) const = default;
    ByteView view() const { return {bytes.data(), bytes.size()}; }
};

std::pair<DhSecret, DhShare> dh_generate(RandomSource& rng);
// Recomputes the public share of a stored secret (used after unsealing).
std::optional<DhShare> dh_generate_public(const DhSecret& secret);
// Rejects identity/low-order peer shares (all-zero shared secret).
std::optional<SharedSecret> dh_combine(const DhSecret& secret, const DhShare& peer);

// Session-key derivation; distinct contexts yield independent keys.
SymKey kdf_session(const SharedSecret& ss, ByteView context);
inline SymKey kdf_session(const SharedSecret& ss, std::string_view context) {
    return kdf_session(ss, ByteView(reinterpret_cast<const std::uint8_t*>(context.data()),
                                    context.size()));
}

}  // namespace secgrid
