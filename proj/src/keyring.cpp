#include "secgrid/keyring.hpp"

#include <set>
#include <stdexcept>

namespace secgrid {

Hash256 keyring_leaf_hash(std::uint64_t meter_id, KeyStatus status, const SymKey& init_key) {
    Bytes pre;
    pre.push_back(0x00);
    put_u64(pre, meter_id);
    pre.push_back(static_cast<std::uint8_t>(status));
    Hash256 key_hash = sha256(init_key.view());
    append(pre, {key_hash.data(), key_hash.size()});
    return sha256(as_view(pre));
}

Hash256 keyring_inner_hash(const Hash256& left, const Hash256& right) {
    Bytes pre;
    pre.push_back(0x01);
    append(pre, {left.data(), left.size()});
    append(pre, {right.data(), right.size()});
    return sha256(as_view(pre));
}

Hash256 keyring_empty_root() {
    Bytes tag = to_bytes("secgrid/keyring/empty/v1");
    return sha256(as_view(tag));
}

namespace {

// Walks one audit path. Returns nullopt when the proof shape does not match
// (index, count); otherwise the root implied by `leaf_hash`.
std::optional<Hash256> walk_proof(const Hash256& leaf_hash, const MerkleProof& proof,
                                  std::uint64_t leaf_count) {
    if (leaf_count == 0) return std::nullopt;
    if (proof.index >= leaf_count) return std::nullopt;
    Hash256 running = leaf_hash;
    std::uint64_t pos = proof.index;
    std::uint64_t size = leaf_count;
    std::size_t used = 0;
    while (size > 1) {
        bool self_dup = (pos == size - 1) && (size % 2 == 1);
        if (self_dup) {
            running = keyring_inner_hash(running, running);
        } else {
            if (used >= proof.siblings.size()) return std::nullopt;
            const Hash256& sib = proof.siblings[used++];
            running = (pos % 2 == 0) ? keyring_inner_hash(running, sib)
                                     : keyring_inner_hash(sib, running);
        }
        pos /= 2;
        size = (size + 1) / 2;
    }
    if (used != proof.siblings.size()) return std::nullopt;
    return running;
}

}  // namespace

bool verify_leaf_proof(const Hash256& root, const Hash256& leaf_hash, const MerkleProof& proof,
                       std::uint64_t leaf_count) {
    auto computed = walk_proof(leaf_hash, proof, leaf_count);
    return computed.has_value() && *computed == root;
}

Hash256 fold_proof(const Hash256& leaf_hash, const MerkleProof& proof, std::uint64_t leaf_count) {
    auto computed = walk_proof(leaf_hash, proof, leaf_count);
    if (!computed) throw std::invalid_argument("proof shape mismatch");
    return *computed;
}

void UntrustedKeyStore::init(std::vector<StoredLeaf> leaves) {
    snapshots_.clear();
    snapshots_.push_back(std::move(leaves));
    current_ = 0;
}

MerkleProof UntrustedKeyStore::prove(const std::vector<StoredLeaf>& leaves,
                                     std::size_t index) const {
    MerkleProof proof;
    proof.index = index;
    std::vector<Hash256> level;
    level.reserve(leaves.size());
    for (const auto& l : leaves) level.push_back(l.leaf_hash);
    std::size_t pos = index;
    while (level.size() > 1) {
        bool self_dup = (pos == level.size() - 1) && (level.size() % 2 == 1);
        if (!self_dup) proof.siblings.push_back(level[pos ^ 1]);
        std::vector<Hash256> next;
        next.reserve((level.size() + 1) / 2);
        for (std::size_t i = 0; i < level.size(); i += 2) {
            const Hash256& right = (i + 1 < level.size()) ? level[i + 1] : level[i];
            next.push_back(keyring_inner_hash(level[i], right));
        }
        level = std::move(next);
        pos /= 2;
    }
    return proof;
}

std::optional<UntrustedKeyStore::LeafResponse> UntrustedKeyStore::fetch(
    std::uint64_t meter_id) const {
    if (forced_) {
        auto [snap, pos] = *forced_;
        forced_.reset();
        return fetch_at(snap, pos);
    }
    if (snapshots_.empty()) return std::nullopt;
    const auto& leaves = snapshots_[current_];
    for (std::size_t i = 0; i < leaves.size(); ++i) {
        if (leaves[i].meter_id == meter_id)
            return LeafResponse{leaves[i].exported, prove(leaves, i)};
    }
    return std::nullopt;
}

void UntrustedKeyStore::force_next_response(std::size_t snapshot, std::size_t position) {
    forced_ = {snapshot, position};
}

void UntrustedKeyStore::update(std::uint64_t index, Bytes exported, const Hash256& leaf_hash) {
    if (snapshots_.empty()) throw std::logic_error("update before init");
    std::vector<StoredLeaf> next = snapshots_[current_];
    if (index >= next.size()) throw std::out_of_range("leaf index");
    next[index].exported = std::move(exported);
    next[index].leaf_hash = leaf_hash;
    snapshots_.push_back(std::move(next));
    current_ = snapshots_.size() - 1;
}

bool UntrustedKeyStore::rollback(std::size_t snapshot) {
    if (snapshot >= snapshots_.size()) return false;
    current_ = snapshot;
    return true;
}

void UntrustedKeyStore::wipe() {
    snapshots_.push_back({});
    current_ = snapshots_.size() - 1;
}

std::optional<UntrustedKeyStore::LeafResponse> UntrustedKeyStore::fetch_at(
    std::size_t snapshot, std::size_t position) const {
    if (snapshot >= snapshots_.size()) return std::nullopt;
    const auto& leaves = snapshots_[snapshot];
    if (position >= leaves.size()) return std::nullopt;
    return LeafResponse{leaves[position].exported, prove(leaves, position)};
}

std::size_t UntrustedKeyStore::leaf_total() const {
    return snapshots_.empty() ? 0 : snapshots_[current_].size();
}

std::vector<Bytes> UntrustedKeyStore::all_exported_blobs() const {
    std::vector<Bytes> out;
    for (const auto& snap : snapshots_)
        for (const auto& leaf : snap) out.push_back(leaf.exported);
    return out;
}

MerkleKeyStore MerkleKeyStore::build(
    const std::vector<std::pair<std::uint64_t, SymKey>>& records, Enclave& enclave,
    UntrustedKeyStore& storage) {
    std::set<std::uint64_t> ids;
    for (const auto& [id, _] : records)
        if (!ids.insert(id).second) throw std::invalid_argument("duplicate meter id");

    std::vector<UntrustedKeyStore::StoredLeaf> leaves;
    std::vector<Hash256> level;
    leaves.reserve(records.size());
    for (const auto& [id, key] : records) {
        SealedRecord sealed = enclave.seal("keyring/" + std::to_string(id), key.view());
        Bytes exported;
        put_u64(exported, id);
        exported.push_back(static_cast<std::uint8_t>(KeyStatus::Active));
        append(exported, as_view(sealed.encode()));
        Hash256 lh = keyring_leaf_hash(id, KeyStatus::Active, key);
        leaves.push_back({std::move(exported), lh, id});
        level.push_back(lh);
    }

    Hash256 root = keyring_empty_root();
    if (!level.empty()) {
        while (level.size() > 1) {
            std::vector<Hash256> next;
            next.reserve((level.size() + 1) / 2);
            for (std::size_t i = 0; i < level.size(); i += 2) {
                const Hash256& right = (i + 1 < level.size()) ? level[i + 1] : level[i];
                next.push_back(keyring_inner_hash(level[i], right));
            }
            level = std::move(next);
        }
        root = level[0];
    }

    std::uint64_t count = records.size();
    storage.init(std::move(leaves));
    return MerkleKeyStore(root, count, enclave, storage);
}

MerkleKeyStore::GetOutcome MerkleKeyStore::get_and_void(std::uint64_t meter_id) {
    auto resp = storage_->fetch(meter_id);
    if (!resp) {
        // A store claiming emptiness while the root commits to leaves has
        // been wiped; a missing single id is an unknown meter.
        if (leaf_count_ > 0 && storage_->leaf_total() == 0)
            return {GetStatus::IntegrityFailure};
        return {GetStatus::NotFound};
    }

    // Parse the exported record and recompute the leaf hash from plaintext;
    // nothing the store sent is trusted until the proof checks out.
    std::uint64_t claimed_id;
    KeyStatus status;
    SymKey key;
    try {
        ByteReader r(as_view(resp->exported));
        claimed_id = r.u64();
        std::uint8_t s = r.u8();
        if (s > 1) return {GetStatus::IntegrityFailure};
        status = static_cast<KeyStatus>(s);
        auto sealed = SealedRecord::decode(r.take(r.remaining()));
        if (!sealed || sealed->label != "keyring/" + std::to_string(claimed_id))
            return {GetStatus::IntegrityFailure};
        auto plain = enclave_->unseal(*sealed);
        if (!plain || plain->size() != 16) return {GetStatus::IntegrityFailure};
        key = SymKey::from_bytes(as_view(*plain));
    } catch (const std::out_of_range&) {
        return {GetStatus::IntegrityFailure};
    }
    if (claimed_id != meter_id) return {GetStatus::IntegrityFailure};

    Hash256 leaf = keyring_leaf_hash(claimed_id, status, key);
    if (!verify_leaf_proof(root_, leaf, resp->proof, leaf_count_))
        return {GetStatus::IntegrityFailure};

    if (status == KeyStatus::Void) return {GetStatus::AlreadyVoid};

    // Void the leaf and advance the in-enclave root atomically with the
    // storage update.
    Hash256 new_leaf = keyring_leaf_hash(claimed_id, KeyStatus::Void, key);
    Hash256 new_root = fold_proof(new_leaf, resp->proof, leaf_count_);
    Bytes new_exported = resp->exported;
    new_exported[8] = static_cast<std::uint8_t>(KeyStatus::Void);
    storage_->update(resp->proof.index, std::move(new_exported), new_leaf);
    root_ = new_root;
    return {GetStatus::Ok, key};
}

}  // namespace secgrid
