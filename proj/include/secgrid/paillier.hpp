#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "secgrid/bytes.hpp"

namespace secgrid {

// Textbook Paillier over a 2048-bit modulus (g = n + 1), the homomorphic
// baseline the benchmarks compare against.
class Paillier {
public:
    struct Ciphertext {
        std::string value;  // decimal representation of c in Z_{n^2}
    };

    // Deterministic keygen from a seed; bits is the modulus size.
    static Paillier generate(std::uint64_t seed, unsigned bits = 2048);
    ~Paillier();
    Paillier(Paillier&&) noexcept;
    Paillier& operator=(Paillier&&) noexcept;

    Ciphertext encrypt(std::uint64_t message) const;
    // Throws std::invalid_argument when the decrypted value exceeds u64
    // (messages must stay below the modulus by construction).
    std::uint64_t decrypt(const Ciphertext& c) const;

    // Enc(m1) (+) Enc(m2) = Enc(m1 + m2 mod n)
    Ciphertext add(const Ciphertext& a, const Ciphertext& b) const;
    // Enc(m) (*) k = Enc(k * m mod n)
    Ciphertext scalar_mul(const Ciphertext& c, std::uint64_t k) const;

    unsigned bits() const;

private:
    Paillier();
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace secgrid
