#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace secgrid {

struct BenchRow {
    std::string function;
    std::uint32_t users = 0;
    std::string backend;
    double median_ms = 0;
    double p95_ms = 0;
    std::uint32_t iterations = 0;
};

inline constexpr const char* kBenchCsvHeader = "function,users,backend,median_ms,p95_ms,iterations";
std::string to_csv(const BenchRow& row);

// function: agg | pricing | forecast | micro; backend: enclave | paillier.
// Results are checksummed against an untimed execution of the same inputs.
std::vector<BenchRow> run_bench(const std::string& function, std::uint32_t users,
                                const std::string& backend, std::uint32_t iterations);

// Decrypt-into-enclave cost for a batch of `users` reports, median ms.
double transmit_bench_ms(std::uint32_t users, std::uint32_t iterations);

}  // namespace secgrid
