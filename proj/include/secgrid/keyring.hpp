#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "secgrid/enclave.hpp"

namespace secgrid {

enum class KeyStatus : std::uint8_t { Active = 0, Void = 1 };

struct KeyRecord {
    std::uint64_t meter_id;
    SymKey init_key;
    KeyStatus status = KeyStatus::Active;
};

// Leaf: H(0x00 || meter_id(8 BE) || status(1) || H(init_key))
// Inner: H(0x01 || left || right); odd levels promote a duplicated last node.
Hash256 keyring_leaf_hash(std::uint64_t meter_id, KeyStatus status, const SymKey& init_key);
Hash256 keyring_inner_hash(const Hash256& left, const Hash256& right);
Hash256 keyring_empty_root();

// Audit path bottom-up; self-duplicated levels are implied by (index, count)
// and consume no stored sibling.
struct MerkleProof {
    std::uint64_t index = 0;
    std::vector<Hash256> siblings;
};

bool verify_leaf_proof(const Hash256& root, const Hash256& leaf_hash, const MerkleProof& proof,
                       std::uint64_t leaf_count);

// Recomputes the root that results from replacing the proven leaf, reusing
// the verified audit path.
Hash256 fold_proof(const Hash256& leaf_hash, const MerkleProof& proof, std::uint64_t leaf_count);

// The storage half the control enclave does NOT trust. Keeps every snapshot
// so the adversary (and the freshness model check) can serve stale data.
class UntrustedKeyStore {
public:
    struct StoredLeaf {
        Bytes exported;  // meter_id(8 BE) || status(1) || sealed init-key record
        Hash256 leaf_hash;
        std::uint64_t meter_id;
    };

    struct LeafResponse {
        Bytes exported;
        MerkleProof proof;
    };

    void init(std::vector<StoredLeaf> leaves);
    std::optional<LeafResponse> fetch(std::uint64_t meter_id) const;
    void update(std::uint64_t index, Bytes exported, const Hash256& leaf_hash);

    // Adversary / model-check surface.
    std::size_t snapshot_count() const { return snapshots_.size(); }
    std::size_t current_snapshot() const { return current_; }
    bool rollback(std::size_t snapshot);
    void wipe();
    std::optional<LeafResponse> fetch_at(std::size_t snapshot, std::size_t position) const;
    std::size_t leaf_total() const;
    // Every exported record ever held, for transcript scans.
    std::vector<Bytes> all_exported_blobs() const;
    // Lying-store hook: the next fetch() serves this (snapshot, position)
    // entry regardless of the id asked for.
    void force_next_response(std::size_t snapshot, std::size_t position);

private:
    MerkleProof prove(const std::vector<StoredLeaf>& leaves, std::size_t index) const;

    std::vector<std::vector<StoredLeaf>> snapshots_;
    std::size_t current_ = 0;
    mutable std::optional<std::pair<std::size_t, std::size_t>> forced_;
};

// Control-enclave view: the root digest and leaf count are the only trusted
// state; every read and update is checked against them.
class MerkleKeyStore {
public:
    enum class GetStatus { Ok, NotFound, AlreadyVoid, IntegrityFailure };

    struct GetOutcome {
        GetStatus status;
        SymKey key{};  // valid only when status == Ok
    };

    // Seals each init key to `enclave` and publishes leaves to `storage`.
    // Throws std::invalid_argument on duplicate meter ids.
    static MerkleKeyStore build(const std::vector<std::pair<std::uint64_t, SymKey>>& records,
                                Enclave& enclave, UntrustedKeyStore& storage);

    GetOutcome get_and_void(std::uint64_t meter_id);

    const Hash256& root() const { return root_; }
    std::uint64_t leaf_count() const { return leaf_count_; }

private:
    MerkleKeyStore(Hash256 root, std::uint64_t count, Enclave& enclave, UntrustedKeyStore& storage)
        : root_(root), leaf_count_(count), enclave_(&enclave), storage_(&storage) {}

    Hash256 root_;
    std::uint64_t leaf_count_;
    Enclave* enclave_;
    UntrustedKeyStore* storage_;
};

}  // namespace secgrid
