#include "secgrid/enclave.hpp"

namespace secgrid {

namespace {
const Bytes kMeasurePrefix = to_bytes("secgrid/measurement/v1");
const Bytes kQuotePrefix = to_bytes("secgrid/quote/v1");
const Bytes kSealInfoPrefix = to_bytes("secgrid/seal/v1");
}  // namespace

Measurement measure_identity(std::string_view code_identity) {
    Bytes id = to_bytes(code_identity);
    return Measurement{sha256({as_view(kMeasurePrefix), as_view(id)})};
}

static Bytes quote_signing_bytes(const Measurement& m, ByteView user_data) {
    Bytes msg = kQuotePrefix;
    append(msg, {m.digest.data(), m.digest.size()});
    put_u32(msg, static_cast<std::uint32_t>(user_data.size()));
    append(msg, user_data);
    return msg;
}

Quote AttestationService::issue(const Measurement& m, ByteView user_data) const {
    Quote q;
    q.measurement = m;
    q.user_data.assign(user_data.begin(), user_data.end());
    q.attestation_sig = sign(root_, as_view(quote_signing_bytes(m, user_data)));
    return q;
}

bool verify_quote(const Quote& q, const Measurement& expected,
                  const std::array<std::uint8_t, 32>& attn_root_pk) {
    if (!(q.measurement == expected)) return false;
    return verify(attn_root_pk, as_view(quote_signing_bytes(q.measurement, as_view(q.user_data))),
                  as_view(q.attestation_sig));
}

Bytes Quote::encode() const {
    Bytes out;
    append(out, {measurement.digest.data(), measurement.digest.size()});
    put_u32(out, static_cast<std::uint32_t>(user_data.size()));
    append(out, as_view(user_data));
    put_u16(out, static_cast<std::uint16_t>(attestation_sig.size()));
    append(out, as_view(attestation_sig));
    return out;
}

std::optional<Quote> Quote::decode(ByteView wire) {
    try {
        ByteReader r(wire);
        Quote q;
        q.measurement.digest = r.take_array<32>();
        q.user_data = r.take_bytes(r.u32());
        q.attestation_sig = r.take_bytes(r.u16());
        if (!r.done()) return std::nullopt;
        return q;
    } catch (const std::out_of_range&) {
        return std::nullopt;
    }
}

Bytes SealedRecord::encode() const {
    Bytes out;
    put_u16(out, static_cast<std::uint16_t>(label.size()));
    append(out, as_view(to_bytes(label)));
    append(out, {envelope.iv.data(), envelope.iv.size()});
    put_u32(out, static_cast<std::uint32_t>(envelope.ciphertext.size()));
    append(out, as_view(envelope.ciphertext));
    append(out, {envelope.tag.data(), envelope.tag.size()});
    return out;
}

std::optional<SealedRecord> SealedRecord::decode(ByteView wire) {
    try {
        ByteReader r(wire);
        SealedRecord rec;
        auto label = r.take_bytes(r.u16());
        rec.label.assign(label.begin(), label.end());
        rec.envelope.iv = r.take_array<12>();
        rec.envelope.ciphertext = r.take_bytes(r.u32());
        rec.envelope.tag = r.take_array<16>();
        rec.envelope.aad = to_bytes(rec.label);
        if (!r.done()) return std::nullopt;
        return rec;
    } catch (const std::out_of_range&) {
        return std::nullopt;
    }
}

Enclave::Enclave(std::string code_identity, ByteView root_seal_secret,
                 const AttestationService* attn, std::uint32_t boot_epoch)
    : identity_(std::move(code_identity)),
      measurement_(measure_identity(identity_)),
      epoch_(boot_epoch),
      seal_key_(SymKey::from_bytes(as_view(hkdf_sha256(
          root_seal_secret, {measurement_.digest.data(), measurement_.digest.size()},
          as_view(kSealInfoPrefix), 16)))),
      seal_aead_(seal_key_, iv_prefix(false, epoch_)),
      attn_(attn) {}

Quote Enclave::quote(ByteView user_data) const {
    if (!attn_) throw std::logic_error("enclave has no attestation service");
    return attn_->issue(measurement_, user_data);
}

SealedRecord Enclave::seal(std::string_view label, ByteView plaintext) {
    SealedRecord rec;
    rec.label = std::string(label);
    rec.envelope = ae_encrypt(seal_aead_, plaintext, as_view(to_bytes(label)));
    return rec;
}

std::optional<Bytes> Enclave::unseal(const SealedRecord& rec) const {
    return ae_decrypt(seal_key_, rec.envelope, as_view(to_bytes(rec.label)));
}

void VersionedStore::store(const SealedRecord& rec) {
    std::lock_guard lock(mu_);
    auto& entry = entries_[rec.label];
    // A store after a rollback appends after the selected version; older
    // branches stay available to the adversary as recorded history.
    entry.versions.push_back(rec);
    entry.current = entry.versions.size() - 1;
}

std::optional<SealedRecord> VersionedStore::load(const std::string& label) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find(label);
    if (it == entries_.end() || it->second.versions.empty()) return std::nullopt;
    return it->second.versions[it->second.current];
}

bool VersionedStore::contains(const std::string& label) const {
    std::lock_guard lock(mu_);
    return entries_.count(label) > 0;
}

std::size_t VersionedStore::version_count(const std::string& label) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find(label);
    return it == entries_.end() ? 0 : it->second.versions.size();
}

bool VersionedStore::rollback(const std::string& label, std::size_t version) {
    std::lock_guard lock(mu_);
    auto it = entries_.find(label);
    if (it == entries_.end() || version >= it->second.versions.size()) return false;
    it->second.current = version;
    return true;
}

std::vector<std::string> VersionedStore::labels() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [label, _] : entries_) out.push_back(label);
    return out;
}

std::vector<Bytes> VersionedStore::all_encoded_versions() const {
    std::lock_guard lock(mu_);
    std::vector<Bytes> out;
    for (const auto& [_, entry] : entries_)
        for (const auto& rec : entry.versions) out.push_back(rec.encode());
    return out;
}

std::unique_ptr<Enclave> EnclaveKernel::create(std::string code_identity) {
    std::uint32_t epoch = ++epochs_[code_identity];
    return std::make_unique<Enclave>(std::move(code_identity), as_view(root_seal_secret_), attn_,
                                     epoch);
}

}  // namespace secgrid
