#include "secgrid/secgrid.h"

#include <cstring>
#include <string>

#include "secgrid/config.hpp"
#include "secgrid/bench.hpp"

namespace {

thread_local std::string g_last_error;

secgrid_status set_error(secgrid_status status, const std::string& message) {
    g_last_error = message;
    return status;
}

}  // namespace

struct secgrid_run {
    secgrid::ScenarioConfig config;
    secgrid::AdversaryScript script;
    uint64_t seed = 0;
    bool executed = false;
    secgrid::RunResult result;
    std::string summary;
};

extern "C" {

uint32_t secgrid_version(void) { return 0x00010000; /* 1.0.0 */ }

const char* secgrid_last_error(void) { return g_last_error.c_str(); }

secgrid_status secgrid_run_create(const char* config_text, const char* script_text, uint64_t seed,
                                  secgrid_run** out) {
    if (!out) return set_error(SECGRID_ERR_INVALID_ARG, "out handle is null");
    *out = nullptr;
    auto run = new (std::nothrow) secgrid_run;
    if (!run) return set_error(SECGRID_ERR_RUNTIME, "allocation failed");
    try {
        if (config_text && *config_text)
            run->config = secgrid::parse_scenario_config(config_text);
    } catch (const std::exception& e) {
        delete run;
        return set_error(SECGRID_ERR_CONFIG, e.what());
    }
    try {
        if (script_text && *script_text)
            run->script = secgrid::parse_adversary_script(script_text);
    } catch (const std::exception& e) {
        delete run;
        return set_error(SECGRID_ERR_SCRIPT, e.what());
    }
    run->seed = seed;
    *out = run;
    return SECGRID_OK;
}

secgrid_status secgrid_run_execute(secgrid_run* run) {
    if (!run) return set_error(SECGRID_ERR_INVALID_ARG, "run handle is null");
    try {
        run->result = secgrid::run_scenario(run->config, run->script, run->seed);
        run->summary = run->result.summary_json;
        run->executed = true;
        return SECGRID_OK;
    } catch (const std::exception& e) {
        return set_error(SECGRID_ERR_RUNTIME, e.what());
    }
}

void secgrid_run_destroy(secgrid_run* run) { delete run; }

size_t secgrid_run_event_count(const secgrid_run* run) {
    return run && run->executed ? run->result.event_lines.size() : 0;
}

const char* secgrid_run_event_line(const secgrid_run* run, size_t index) {
    if (!run || !run->executed || index >= run->result.event_lines.size()) return nullptr;
    return run->result.event_lines[index].c_str();
}

const char* secgrid_run_summary_json(const secgrid_run* run) {
    return run && run->executed ? run->summary.c_str() : nullptr;
}

uint64_t secgrid_run_accepted_count(const secgrid_run* run) {
    return run && run->executed ? run->result.accepted.size() : 0;
}

uint64_t secgrid_run_alarm_count(const secgrid_run* run) {
    return run && run->executed ? run->result.alarms.size() : 0;
}

uint64_t secgrid_run_aggregate_total(const secgrid_run* run) {
    return run && run->executed ? run->result.aggregate_total() : 0;
}

secgrid_status secgrid_bench(const char* function, uint32_t users, const char* backend,
                             uint32_t iterations, secgrid_bench_row* rows, size_t* count) {
    if (!function || !backend || !rows || !count || *count == 0)
        return set_error(SECGRID_ERR_INVALID_ARG, "bad bench arguments");
    try {
        auto results = secgrid::run_bench(function, users, backend, iterations);
        size_t n = std::min(*count, results.size());
        for (size_t i = 0; i < n; ++i) {
            secgrid_bench_row& row = rows[i];
            std::memset(&row, 0, sizeof(row));
            std::strncpy(row.function, results[i].function.c_str(), sizeof(row.function) - 1);
            std::strncpy(row.backend, results[i].backend.c_str(), sizeof(row.backend) - 1);
            row.users = results[i].users;
            row.median_ms = results[i].median_ms;
            row.p95_ms = results[i].p95_ms;
            row.iterations = results[i].iterations;
        }
        *count = n;
        return SECGRID_OK;
    } catch (const std::exception& e) {
        return set_error(SECGRID_ERR_RUNTIME, e.what());
    }
}

secgrid_status secgrid_transmit_bench(uint32_t users, uint32_t iterations,
                                      double* out_median_ms) {
    if (!out_median_ms) return set_error(SECGRID_ERR_INVALID_ARG, "out pointer is null");
    try {
        *out_median_ms = secgrid::transmit_bench_ms(users, iterations);
        return SECGRID_OK;
    } catch (const std::exception& e) {
        return set_error(SECGRID_ERR_RUNTIME, e.what());
    }
}

const char* secgrid_crypto_vectors(void) {
    // AES-128-GCM known answers from the GCM specification test cases (also
    // in the NIST CAVP set); X25519 from RFC 7748 section 6.1; Ed25519 from
    // RFC 8032 TEST 1.
    static const char* vectors =
        R"({"alg":"aes-128-gcm","case":1,"key":"00000000000000000000000000000000","iv":"000000000000000000000000","pt":"","aad":"","ct":"","tag":"58e2fccefa7e3061367f1d57a4e7455a"})"
        "\n"
        R"({"alg":"aes-128-gcm","case":2,"key":"00000000000000000000000000000000","iv":"000000000000000000000000","pt":"00000000000000000000000000000000","aad":"","ct":"0388dace60b6a392f328c2b971b2fe78","tag":"ab6e47d42cec13bdf53a67b21257bddf"})"
        "\n"
        R"({"alg":"aes-128-gcm","case":3,"key":"feffe9928665731c6d6a8f9467308308","iv":"cafebabefacedbaddecaf888","pt":"d9313225f88406e5a55909c5aff5269a86a7a9531534f7da2e4c303d8a318a721c3c0c95956809532fcf0e2449a6b525b16aedf5aa0de657ba637b391aafd255","aad":"","ct":"42831ec2217774244b7221b784d0d49ce3aa212f2c02a4e035c17e2329aca12e21d514b25466931c7d8f6a5aac84aa051ba30b396a0aac973d58e091473f5985","tag":"4d5c2af327cd64a62cf35abd2ba6fab4"})"
        "\n"
        R"({"alg":"aes-128-gcm","case":4,"key":"feffe9928665731c6d6a8f9467308308","iv":"cafebabefacedbaddecaf888","pt":"d9313225f88406e5a55909c5aff5269a86a7a9531534f7da2e4c303d8a318a721c3c0c95956809532fcf0e2449a6b525b16aedf5aa0de657ba637b39","aad":"feedfacedeadbeeffeedfacedeadbeefabaddad2","ct":"42831ec2217774244b7221b784d0d49ce3aa212f2c02a4e035c17e2329aca12e21d514b25466931c7d8f6a5aac84aa051ba30b396a0aac973d58e091","tag":"5bc94fbc3221a5db94fae95ae7121a47"})"
        "\n"
        R"({"alg":"x25519","a_priv":"77076d0a7318a57d3c16c17251b26645df4c2f87ebc0992ab177fba51db92c2a","a_pub":"8520f0098930a754748b7ddcb43ef75a0dbf3a0d26381af4eba4a98eaa9b4e6a","b_priv":"5dab087e624a8a4b79e17f8b83800ee66f3bb1292618b6fd1c2f8b27ff88e0eb","b_pub":"de9edb7d7b7dc1b4d35b61c2ece435373f8343c85b78674dadfc7e146f882b4f","shared":"4a5d9d5ba4ce2de1728e3bf480350f25e07e21c947d19e3376f09b3c1e161742"})"
        "\n"
        R"({"alg":"ed25519","seed":"9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60","pub":"d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a","msg":"","sig":"e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e065224901555fb8821590a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b"})"
        "\n";
    return vectors;
}

}  // extern "C"
