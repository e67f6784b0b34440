#include <doctest.h>

#include "secgrid/keyring.hpp"

using namespace secgrid;

namespace {

// Independent root computation: rebuild every level from the full leaf set,
// no audit paths involved.
Hash256 oracle_root(const std::vector<Hash256>& leaves) {
    if (leaves.empty()) return keyring_empty_root();
    std::vector<Hash256> level = leaves;
    while (level.size() > 1) {
        std::vector<Hash256> next;
        for (std::size_t i = 0; i < level.size(); i += 2) {
            const Hash256& right = (i + 1 < level.size()) ? level[i + 1] : level[i];
            next.push_back(keyring_inner_hash(level[i], right));
        }
        level = std::move(next);
    }
    return level[0];
}

struct Fixture {
    Enclave enclave{"cc/v1", as_view(Bytes(32, 5))};
    UntrustedKeyStore storage;
    Drbg rng{99, "keyring"};

    std::vector<std::pair<std::uint64_t, SymKey>> records(std::size_t n, std::uint64_t base = 1) {
        std::vector<std::pair<std::uint64_t, SymKey>> out;
        for (std::size_t i = 0; i < n; ++i) out.emplace_back(base + i, SymKey::generate(rng));
        return out;
    }
};

}  // namespace

TEST_CASE("empty store has the defined empty root") {
    Fixture f;
    MerkleKeyStore store = MerkleKeyStore::build({}, f.enclave, f.storage);
    CHECK(store.root() == keyring_empty_root());
    CHECK(store.leaf_count() == 0);
    CHECK(store.get_and_void(1).status == MerkleKeyStore::GetStatus::NotFound);
}

TEST_CASE("single record: root equals the leaf hash") {
    Fixture f;
    auto recs = f.records(1, 42);
    MerkleKeyStore store = MerkleKeyStore::build(recs, f.enclave, f.storage);
    CHECK(store.root() == keyring_leaf_hash(42, KeyStatus::Active, recs[0].second));
}

TEST_CASE("roots match the independent recomputation for many sizes") {
    for (std::size_t n : {2u, 3u, 4u, 5u, 7u, 8u, 13u}) {
        Fixture f;
        auto recs = f.records(n);
        MerkleKeyStore store = MerkleKeyStore::build(recs, f.enclave, f.storage);
        std::vector<Hash256> leaves;
        for (const auto& [id, key] : recs)
            leaves.push_back(keyring_leaf_hash(id, KeyStatus::Active, key));
        CHECK(store.root() == oracle_root(leaves));
    }
}

TEST_CASE("proofs verify for every leaf of an 8-record store; mutations fail") {
    Fixture f;
    auto recs = f.records(8);
    MerkleKeyStore store = MerkleKeyStore::build(recs, f.enclave, f.storage);
    for (std::size_t i = 0; i < 8; ++i) {
        auto resp = f.storage.fetch(recs[i].first);
        REQUIRE(resp);
        Hash256 leaf = keyring_leaf_hash(recs[i].first, KeyStatus::Active, recs[i].second);
        CHECK(verify_leaf_proof(store.root(), leaf, resp->proof, 8));

        // flipped path node
        auto bad = resp->proof;
        bad.siblings[0][0] ^= 1;
        CHECK_FALSE(verify_leaf_proof(store.root(), leaf, bad, 8));

        // wrong index
        auto wrong_index = resp->proof;
        wrong_index.index = (wrong_index.index + 1) % 8;
        CHECK_FALSE(verify_leaf_proof(store.root(), leaf, wrong_index, 8));
    }
}

TEST_CASE("duplicate meter ids are rejected") {
    Fixture f;
    auto recs = f.records(3);
    recs.push_back({recs[0].first, recs[1].second});
    CHECK_THROWS_AS(MerkleKeyStore::build(recs, f.enclave, f.storage), std::invalid_argument);
}

TEST_CASE("get_and_void: first use releases the key, second is AlreadyVoid") {
    Fixture f;
    auto recs = f.records(5, 40);
    MerkleKeyStore store = MerkleKeyStore::build(recs, f.enclave, f.storage);
    Hash256 root_before = store.root();

    auto first = store.get_and_void(42);
    REQUIRE(first.status == MerkleKeyStore::GetStatus::Ok);
    CHECK(first.key == recs[2].second);
    CHECK_FALSE(store.root() == root_before);  // root advanced with the void

    auto second = store.get_and_void(42);
    CHECK(second.status == MerkleKeyStore::GetStatus::AlreadyVoid);

    CHECK(store.get_and_void(999).status == MerkleKeyStore::GetStatus::NotFound);

    // other meters still work
    CHECK(store.get_and_void(40).status == MerkleKeyStore::GetStatus::Ok);
}

TEST_CASE("stale leaf after voiding fails the proof against the current root") {
    Fixture f;
    auto recs = f.records(4);
    MerkleKeyStore store = MerkleKeyStore::build(recs, f.enclave, f.storage);
    REQUIRE(store.get_and_void(1).status == MerkleKeyStore::GetStatus::Ok);

    // untrusted storage rolls back to the pre-void snapshot
    REQUIRE(f.storage.rollback(0));
    auto outcome = store.get_and_void(1);
    CHECK(outcome.status == MerkleKeyStore::GetStatus::IntegrityFailure);
}

TEST_CASE("wiping untrusted storage is detected, never silently tolerated") {
    Fixture f;
    auto recs = f.records(4);
    MerkleKeyStore store = MerkleKeyStore::build(recs, f.enclave, f.storage);
    f.storage.wipe();
    CHECK(store.get_and_void(1).status == MerkleKeyStore::GetStatus::IntegrityFailure);
}

// Freshness model check: after void(id), no (snapshot, position) response the
// storage ever held can make a second get_and_void(id) release the key again.
TEST_CASE("freshness: exhaustive stale-response model check on <=8 leaves") {
    Fixture f;
    auto recs = f.records(8);
    MerkleKeyStore store = MerkleKeyStore::build(recs, f.enclave, f.storage);

    // void a few meters to build up snapshot history
    REQUIRE(store.get_and_void(3).status == MerkleKeyStore::GetStatus::Ok);
    REQUIRE(store.get_and_void(5).status == MerkleKeyStore::GetStatus::Ok);
    REQUIRE(store.get_and_void(1).status == MerkleKeyStore::GetStatus::Ok);

    std::size_t released = 0;
    std::size_t tried = 0;
    for (std::size_t snap = 0; snap < f.storage.snapshot_count(); ++snap) {
        for (std::size_t pos = 0; pos < 8; ++pos) {
            // adversary answers the lookup with an arbitrary historical leaf
            f.storage.force_next_response(snap, pos);
            auto outcome = store.get_and_void(3);
            ++tried;
            if (outcome.status == MerkleKeyStore::GetStatus::Ok) ++released;
        }
    }
    CHECK(tried == f.storage.snapshot_count() * 8);
    CHECK(released == 0);  // the key for meter 3 never comes back
}
