#include "secgrid/bench.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <sstream>
#include <stdexcept>

#include "secgrid/crypto.hpp"
#include "secgrid/functions.hpp"
#include "secgrid/paillier.hpp"
#include "secgrid/wire.hpp"

namespace secgrid {

namespace {

constexpr std::uint32_t kWarmup = 5;

inline void do_not_optimize(std::uint64_t value) {
    asm volatile("" : : "r"(value) : "memory");
}

using Clock = std::chrono::steady_clock;

// One sample = total time of `batch` executions divided by batch.
template <typename F>
std::vector<double> sample_ms(std::uint32_t iterations, std::uint64_t batch, F&& op) {
    std::vector<double> samples;
    samples.reserve(iterations);
    for (std::uint32_t i = 0; i < kWarmup + iterations; ++i) {
        auto start = Clock::now();
        for (std::uint64_t b = 0; b < batch; ++b) op();
        auto stop = Clock::now();
        if (i < kWarmup) continue;
        double ms = std::chrono::duration<double, std::milli>(stop - start).count() /
                    static_cast<double>(batch);
        samples.push_back(ms);
    }
    return samples;
}

BenchRow make_row(std::string function, std::uint32_t users, std::string backend,
                  std::vector<double> samples) {
    std::sort(samples.begin(), samples.end());
    BenchRow row;
    row.function = std::move(function);
    row.users = users;
    row.backend = std::move(backend);
    row.iterations = static_cast<std::uint32_t>(samples.size());
    if (!samples.empty()) {
        row.median_ms = samples[samples.size() / 2];
        std::size_t p95 = std::min(samples.size() - 1, samples.size() * 95 / 100);
        row.p95_ms = samples[p95];
    }
    return row;
}

std::vector<std::uint64_t> bench_readings(std::uint32_t n) {
    Drbg rng(7, "bench/readings");
    std::vector<std::uint64_t> readings(n);
    for (auto& r : readings) r = rng.uniform(1'000'000);
    return readings;
}

BenchRow bench_agg(std::uint32_t users, const std::string& backend, std::uint32_t iterations) {
    auto readings = bench_readings(users);
    UsageWindow w;
    w.meter_count = users;
    w.span = 1;
    w.readings = readings;
    std::uint64_t expected = aggregate_window(w).total;

    if (backend == "enclave") {
        std::uint64_t batch = users >= 1000 ? 100 : 1000;
        std::uint64_t check = 0;
        auto samples = sample_ms(iterations, batch, [&] {
            check = aggregate_window(w).total;
            do_not_optimize(check);
        });
        if (check != expected) throw std::runtime_error("bench altered aggregation result");
        return make_row("agg", users, "enclave", std::move(samples));
    }

    // Paillier route: the gateway folds ciphertexts, the control center
    // decrypts the sum. Meter-side encryption is setup, not measured.
    Paillier paillier = Paillier::generate(7);
    std::vector<Paillier::Ciphertext> cts;
    cts.reserve(users);
    for (auto r : readings) cts.push_back(paillier.encrypt(r));
    Paillier::Ciphertext zero = paillier.encrypt(0);

    std::uint64_t check = expected;
    auto samples = sample_ms(iterations, 1, [&] {
        Paillier::Ciphertext acc = zero;
        for (const auto& ct : cts) acc = paillier.add(acc, ct);
        check = paillier.decrypt(acc);
        do_not_optimize(check);
    });
    if (check != expected) throw std::runtime_error("paillier aggregate mismatch");
    return make_row("agg", users, "paillier", std::move(samples));
}

BenchRow bench_pricing(std::uint32_t users, const std::string& backend,
                       std::uint32_t iterations) {
    const std::uint64_t m0 = 500'000;
    const std::uint64_t a = 80, b = 160;
    Drbg rng(11, "bench/pricing");
    std::uint64_t usage = rng.uniform(2 * m0);

    if (backend == "enclave") {
        std::uint64_t check = 0;
        auto samples = sample_ms(iterations, 1'000'000, [&] {
            check = price_rtp(usage, a, b, m0);
            do_not_optimize(check);
        });
        std::uint64_t expected = usage < m0 ? a : b;
        if (check != expected) throw std::runtime_error("bench altered pricing result");
        return make_row("pricing", users, "enclave", std::move(samples));
    }

    // Fixed-price homomorphic charging: one scalar multiply per request.
    Paillier paillier = Paillier::generate(11);
    Paillier::Ciphertext ct = paillier.encrypt(usage);
    const std::uint64_t price = 120'000;  // milli-currency per kWh
    auto samples = sample_ms(iterations, 1, [&] {
        Paillier::Ciphertext charged = paillier.scalar_mul(ct, price);
        do_not_optimize(charged.value.size());
    });
    return make_row("pricing", users, "paillier", std::move(samples));
}

BenchRow bench_forecast(std::uint32_t users, const std::string& backend,
                        std::uint32_t iterations) {
    StsModel model;
    model.phi_milli = {300, 200, 150, 130, 100, 70, 50};
    auto history = bench_readings(32);
    std::uint64_t expected = forecast_sts(history, model);

    if (backend == "enclave") {
        std::uint64_t check = 0;
        auto samples = sample_ms(iterations, 100'000, [&] {
            check = forecast_sts(history, model);
            do_not_optimize(check);
        });
        if (check != expected) throw std::runtime_error("bench altered forecast result");
        return make_row("forecast", users, "enclave", std::move(samples));
    }

    Paillier paillier = Paillier::generate(13);
    std::vector<Paillier::Ciphertext> cts;
    for (std::size_t j = 0; j < model.phi_milli.size(); ++j)
        cts.push_back(paillier.encrypt(history[j]));
    auto samples = sample_ms(iterations, 1, [&] {
        Paillier::Ciphertext acc = paillier.scalar_mul(cts[0], model.phi_milli[0]);
        for (std::size_t j = 1; j < cts.size(); ++j)
            acc = paillier.add(acc, paillier.scalar_mul(cts[j], model.phi_milli[j]));
        do_not_optimize(paillier.decrypt(acc) / 1000);
    });
    return make_row("forecast", users, "paillier", std::move(samples));
}

std::vector<BenchRow> bench_micro(std::uint32_t iterations) {
    Drbg rng(17, "bench/micro");
    SymKey key = SymKey::generate(rng);
    AeadKey aead(key, iv_prefix(false, 0));
    Bytes payload = rng.bytes(100);  // the 0.1 KB operand size
    Bytes aad = to_bytes("bench");
    CipherEnvelope env = ae_encrypt(aead, as_view(payload), as_view(aad));
    SignKeypair kp = SignKeypair::generate(rng);
    Signature sig = sign(kp, as_view(payload));

    std::vector<BenchRow> rows;
    rows.push_back(make_row("micro:ae_encrypt_0.1KB", 0, "enclave",
                            sample_ms(iterations, 1000, [&] {
                                auto e = ae_encrypt(aead, as_view(payload), as_view(aad));
                                do_not_optimize(e.ciphertext.size());
                            })));
    rows.push_back(make_row("micro:ae_decrypt_0.1KB", 0, "enclave",
                            sample_ms(iterations, 1000, [&] {
                                auto p = ae_decrypt(key, env, as_view(aad));
                                do_not_optimize(p ? p->size() : 0);
                            })));
    rows.push_back(make_row("micro:sign_0.1KB", 0, "enclave", sample_ms(iterations, 200, [&] {
                                auto s = sign(kp, as_view(payload));
                                do_not_optimize(s.size());
                            })));
    rows.push_back(make_row("micro:verify_0.1KB", 0, "enclave", sample_ms(iterations, 200, [&] {
                                bool ok = verify(kp.public_key, as_view(payload), as_view(sig));
                                do_not_optimize(ok);
                            })));

    // seal/unseal equivalents: label-authenticated AE under a derived key
    Bytes root = rng.bytes(32);
    Bytes seal_okm = hkdf_sha256(as_view(root), as_view(payload), as_view(aad), 16);
    SymKey seal_key = SymKey::from_bytes(as_view(seal_okm));
    AeadKey seal_aead(seal_key, iv_prefix(false, 1));
    Bytes label = to_bytes("bench/record");
    CipherEnvelope sealed = ae_encrypt(seal_aead, as_view(payload), as_view(label));
    rows.push_back(make_row("micro:seal_0.1KB", 0, "enclave", sample_ms(iterations, 1000, [&] {
                                auto e = ae_encrypt(seal_aead, as_view(payload), as_view(label));
                                do_not_optimize(e.ciphertext.size());
                            })));
    rows.push_back(make_row("micro:unseal_0.1KB", 0, "enclave", sample_ms(iterations, 1000, [&] {
                                auto p = ae_decrypt(seal_key, sealed, as_view(label));
                                do_not_optimize(p ? p->size() : 0);
                            })));
    return rows;
}

}  // namespace

std::string to_csv(const BenchRow& row) {
    std::ostringstream out;
    out << row.function << ',' << row.users << ',' << row.backend << ',' << row.median_ms << ','
        << row.p95_ms << ',' << row.iterations;
    return out.str();
}

std::vector<BenchRow> run_bench(const std::string& function, std::uint32_t users,
                                const std::string& backend, std::uint32_t iterations) {
    if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
    if (function == "agg") return {bench_agg(users, backend, iterations)};
    if (function == "pricing") return {bench_pricing(users, backend, iterations)};
    if (function == "forecast") return {bench_forecast(users, backend, iterations)};
    if (function == "micro") return bench_micro(iterations);
    throw std::invalid_argument("unknown bench function '" + function + "'");
}

double transmit_bench_ms(std::uint32_t users, std::uint32_t iterations) {
    Drbg rng(23, "bench/transmit");
    std::map<std::uint64_t, SymKey> sessions;
    std::vector<Bytes> frames;
    frames.reserve(users);
    for (std::uint32_t i = 1; i <= users; ++i) {
        SymKey key = SymKey::generate(rng);
        sessions.emplace(i, key);
        AeadKey tx(key, iv_prefix(false, 0));
        ReportPlain plain{i, rng.uniform(1'000'000), {}, 1};
        rng.fill(plain.nonce.data(), plain.nonce.size());
        CipherEnvelope env =
            ae_encrypt(tx, as_view(encode_report_plain(plain)), as_view(aad_bytes(kAadReport)));
        frames.push_back(encode_report({i, env}));
    }

    auto samples = sample_ms(iterations, 1, [&] {
        std::uint64_t sum = 0;
        for (const auto& frame : frames) {
            auto wire = decode_report(as_view(frame));
            const SymKey& key = sessions.at(wire->meter_id_clear);
            auto plain = ae_decrypt(key, wire->envelope, as_view(aad_bytes(kAadReport)));
            auto rp = decode_report_plain(as_view(*plain));
            sum += rp->reading;
        }
        do_not_optimize(sum);
    });
    std::sort(samples.begin(), samples.end());
    return samples.empty() ? 0.0 : samples[samples.size() / 2];
}

}  // namespace secgrid
