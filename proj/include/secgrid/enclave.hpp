#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "secgrid/crypto.hpp"

namespace secgrid {

struct Measurement {
    Hash256 digest{};
    bool operator==(const Measurement&) const = default;
};

Measurement measure_identity(std::string_view code_identity);

struct Quote {
    Measurement measurement;
    Bytes user_data;
    Signature attestation_sig;

    Bytes encode() const;
    static std::optional<Quote> decode(ByteView wire);
};

// Local stand-in for the attestation infrastructure: a root signer whose
// public key is distributed through scenario config.
class AttestationService {
public:
    explicit AttestationService(RandomSource& rng) : root_(SignKeypair::generate(rng)) {}

    Quote issue(const Measurement& m, ByteView user_data) const;
    const std::array<std::uint8_t, 32>& root_public_key() const { return root_.public_key; }

private:
    SignKeypair root_;
};

bool verify_quote(const Quote& q, const Measurement& expected,
                  const std::array<std::uint8_t, 32>& attn_root_pk);

struct SealedRecord {
    std::string label;
    CipherEnvelope envelope;  // aad is the label

    bool operator==(const SealedRecord&) const = default;

    // label_len(u16 BE) || label || iv(12) || ct_len(u32 BE) || ct || tag(16)
    Bytes encode() const;
    static std::optional<SealedRecord> decode(ByteView wire);
};

// Software enclave: isolated state with a measured identity, a seal key
// derived from the machine's root seal secret, and quote issuance. The seal
// key never leaves; a re-created enclave with the same identity and root
// secret re-derives it (boot epoch only shifts the IV space).
class Enclave {
public:
    Enclave(std::string code_identity, ByteView root_seal_secret,
            const AttestationService* attn = nullptr, std::uint32_t boot_epoch = 1);

    const std::string& code_identity() const { return identity_; }
    const Measurement& measurement() const { return measurement_; }
    std::uint32_t boot_epoch() const { return epoch_; }

    Quote quote(ByteView user_data) const;

    SealedRecord seal(std::string_view label, ByteView plaintext);
    std::optional<Bytes> unseal(const SealedRecord& rec) const;

private:
    std::string identity_;
    Measurement measurement_;
    std::uint32_t epoch_;
    SymKey seal_key_;
    AeadKey seal_aead_;
    const AttestationService* attn_;
};

// Untrusted persistence for sealed records. Every store keeps full version
// history so the adversary can substitute any previously stored version;
// honest loads return the current selection (normally the latest).
class VersionedStore {
public:
    void store(const SealedRecord& rec);
    std::optional<SealedRecord> load(const std::string& label) const;
    bool contains(const std::string& label) const;

    std::size_t version_count(const std::string& label) const;
    // Points the label at an older version; later stores append after it.
    bool rollback(const std::string& label, std::size_t version);
    std::vector<std::string> labels() const;
    // Raw view of everything ever written, for transcript scanning in tests.
    std::vector<Bytes> all_encoded_versions() const;

private:
    struct Entry {
        std::vector<SealedRecord> versions;
        std::size_t current = 0;
    };
    mutable std::mutex mu_;
    std::map<std::string, Entry> entries_;
};

// Models the per-machine hardware root: hands out enclaves and tracks boot
// epochs per identity so IV lanes never repeat across restarts.
class EnclaveKernel {
public:
    EnclaveKernel(Bytes root_seal_secret, const AttestationService* attn)
        : root_seal_secret_(std::move(root_seal_secret)), attn_(attn) {}

    std::unique_ptr<Enclave> create(std::string code_identity);

private:
    Bytes root_seal_secret_;
    const AttestationService* attn_;
    std::map<std::string, std::uint32_t> epochs_;
};

}  // namespace secgrid
