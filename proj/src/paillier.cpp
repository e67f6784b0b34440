#include "secgrid/paillier.hpp"

#include <gmp.h>

#include <stdexcept>

namespace secgrid {

struct Paillier::Impl {
    mpz_t n, n2, lambda, mu, g;
    gmp_randstate_t rand;
    unsigned bits = 0;

    Impl() {
        mpz_inits(n, n2, lambda, mu, g, nullptr);
        gmp_randinit_mt(rand);
    }
    ~Impl() {
        mpz_clears(n, n2, lambda, mu, g, nullptr);
        gmp_randclear(rand);
    }
};

Paillier::Paillier() : impl_(std::make_unique<Impl>()) {}
Paillier::~Paillier() = default;
Paillier::Paillier(Paillier&&) noexcept = default;
Paillier& Paillier::operator=(Paillier&&) noexcept = default;

unsigned Paillier::bits() const { return impl_->bits; }

Paillier Paillier::generate(std::uint64_t seed, unsigned bits) {
    Paillier p;
    p.impl_->bits = bits;
    gmp_randseed_ui(p.impl_->rand, seed ^ 0x9e3779b97f4a7c15ULL);

    mpz_t q, prime_p, tmp;
    mpz_inits(q, prime_p, tmp, nullptr);
    unsigned half = bits / 2;
    do {
        mpz_urandomb(prime_p, p.impl_->rand, half);
        mpz_setbit(prime_p, half - 1);
        mpz_setbit(prime_p, 0);
        mpz_nextprime(prime_p, prime_p);
        mpz_urandomb(q, p.impl_->rand, half);
        mpz_setbit(q, half - 1);
        mpz_setbit(q, 0);
        mpz_nextprime(q, q);
        mpz_mul(p.impl_->n, prime_p, q);
    } while (mpz_cmp(prime_p, q) == 0 ||
             mpz_sizeinbase(p.impl_->n, 2) < bits);

    mpz_mul(p.impl_->n2, p.impl_->n, p.impl_->n);
    // g = n + 1
    mpz_add_ui(p.impl_->g, p.impl_->n, 1);
    // lambda = lcm(p-1, q-1)
    mpz_sub_ui(prime_p, prime_p, 1);
    mpz_sub_ui(q, q, 1);
    mpz_lcm(p.impl_->lambda, prime_p, q);
    // mu = (L(g^lambda mod n^2))^-1 mod n
    mpz_powm(tmp, p.impl_->g, p.impl_->lambda, p.impl_->n2);
    mpz_sub_ui(tmp, tmp, 1);
    mpz_divexact(tmp, tmp, p.impl_->n);
    if (mpz_invert(p.impl_->mu, tmp, p.impl_->n) == 0)
        throw std::runtime_error("paillier: mu not invertible");
    mpz_clears(q, prime_p, tmp, nullptr);
    return p;
}

Paillier::Ciphertext Paillier::encrypt(std::uint64_t message) const {
    mpz_t m, r, c;
    mpz_inits(m, r, c, nullptr);
    mpz_set_ui(m, message);
    if (mpz_cmp(m, impl_->n) >= 0) {
        mpz_clears(m, r, c, nullptr);
        throw std::invalid_argument("paillier: message >= n");
    }
    // r in [1, n) with gcd(r, n) = 1
    do {
        mpz_urandomm(r, impl_->rand, impl_->n);
    } while (mpz_cmp_ui(r, 0) == 0);
    // c = (1 + m*n) * r^n mod n^2
    mpz_t c1;
    mpz_init(c1);
    mpz_mul(c1, m, impl_->n);
    mpz_add_ui(c1, c1, 1);
    mpz_mod(c1, c1, impl_->n2);
    mpz_powm(c, r, impl_->n, impl_->n2);
    mpz_mul(c, c, c1);
    mpz_mod(c, c, impl_->n2);

    char* s = mpz_get_str(nullptr, 10, c);
    Ciphertext out{std::string(s)};
    void (*freefunc)(void*, size_t);
    mp_get_memory_functions(nullptr, nullptr, &freefunc);
    freefunc(s, std::string::traits_type::length(s) + 1);
    mpz_clears(m, r, c, c1, nullptr);
    return out;
}

std::uint64_t Paillier::decrypt(const Ciphertext& ct) const {
    mpz_t c, m;
    mpz_inits(c, m, nullptr);
    if (mpz_set_str(c, ct.value.c_str(), 10) != 0) {
        mpz_clears(c, m, nullptr);
        throw std::invalid_argument("paillier: bad ciphertext encoding");
    }
    // m = L(c^lambda mod n^2) * mu mod n
    mpz_powm(m, c, impl_->lambda, impl_->n2);
    mpz_sub_ui(m, m, 1);
    mpz_divexact(m, m, impl_->n);
    mpz_mul(m, m, impl_->mu);
    mpz_mod(m, m, impl_->n);
    if (!mpz_fits_ulong_p(m)) {
        mpz_clears(c, m, nullptr);
        throw std::invalid_argument("paillier: plaintext exceeds u64");
    }
    std::uint64_t out = mpz_get_ui(m);
    mpz_clears(c, m, nullptr);
    return out;
}

Paillier::Ciphertext Paillier::add(const Ciphertext& a, const Ciphertext& b) const {
    mpz_t ca, cb;
    mpz_inits(ca, cb, nullptr);
    mpz_set_str(ca, a.value.c_str(), 10);
    mpz_set_str(cb, b.value.c_str(), 10);
    mpz_mul(ca, ca, cb);
    mpz_mod(ca, ca, impl_->n2);
    char* s = mpz_get_str(nullptr, 10, ca);
    Ciphertext out{std::string(s)};
    void (*freefunc)(void*, size_t);
    mp_get_memory_functions(nullptr, nullptr, &freefunc);
    freefunc(s, std::string::traits_type::length(s) + 1);
    mpz_clears(ca, cb, nullptr);
    return out;
}

Paillier::Ciphertext Paillier::scalar_mul(const Ciphertext& c, std::uint64_t k) const {
    mpz_t cc;
    mpz_init(cc);
    mpz_set_str(cc, c.value.c_str(), 10);
    mpz_powm_ui(cc, cc, k, impl_->n2);
    char* s = mpz_get_str(nullptr, 10, cc);
    Ciphertext out{std::string(s)};
    void (*freefunc)(void*, size_t);
    mp_get_memory_functions(nullptr, nullptr, &freefunc);
    freefunc(s, std::string::traits_type::length(s) + 1);
    mpz_clear(cc);
    return out;
}

}  // namespace secgrid
