#include <doctest.h>

#include "secgrid/crypto.hpp"
#include "secgrid/paillier.hpp"

using namespace secgrid;

// 512-bit keys keep the unit suite fast; the bench uses 2048.
TEST_CASE("paillier: decrypt inverts encrypt") {
    Paillier p = Paillier::generate(1, 512);
    CHECK(p.decrypt(p.encrypt(0)) == 0);
    CHECK(p.decrypt(p.encrypt(1)) == 1);
    CHECK(p.decrypt(p.encrypt(123456789)) == 123456789);
    CHECK(p.decrypt(p.encrypt(UINT64_MAX)) == UINT64_MAX);

    // randomized encryption: same plaintext, different ciphertexts
    CHECK(p.encrypt(42).value != p.encrypt(42).value);
}

TEST_CASE("paillier: additive homomorphism") {
    Paillier p = Paillier::generate(2, 512);
    CHECK(p.decrypt(p.add(p.encrypt(3), p.encrypt(4))) == 7);

    Drbg rng(3, "paillier");
    for (int i = 0; i < 50; ++i) {
        std::uint64_t a = rng.uniform(1'000'000'000);
        std::uint64_t b = rng.uniform(1'000'000'000);
        CHECK(p.decrypt(p.add(p.encrypt(a), p.encrypt(b))) == a + b);
    }

    // fold of many ciphertexts equals the plain sum
    std::uint64_t total = 0;
    Paillier::Ciphertext acc = p.encrypt(0);
    for (int i = 0; i < 64; ++i) {
        std::uint64_t v = rng.uniform(1'000'000);
        total += v;
        acc = p.add(acc, p.encrypt(v));
    }
    CHECK(p.decrypt(acc) == total);
}

TEST_CASE("paillier: scalar multiplication") {
    Paillier p = Paillier::generate(4, 512);
    CHECK(p.decrypt(p.scalar_mul(p.encrypt(5), 3)) == 15);
    Drbg rng(5, "paillier");
    for (int i = 0; i < 25; ++i) {
        std::uint64_t m = rng.uniform(1'000'000);
        std::uint64_t k = 1 + rng.uniform(100'000);
        CHECK(p.decrypt(p.scalar_mul(p.encrypt(m), k)) == m * k);
    }
}

TEST_CASE("paillier: malformed inputs rejected") {
    Paillier p = Paillier::generate(6, 512);
    CHECK_THROWS_AS(p.decrypt(Paillier::Ciphertext{"not-a-number"}), std::invalid_argument);
    // deterministic keygen from equal seeds produces interoperable keys
    Paillier q = Paillier::generate(6, 512);
    CHECK(q.decrypt(p.encrypt(77)) == 77);
}
