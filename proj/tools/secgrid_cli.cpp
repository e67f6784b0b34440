// Command-line front end; talks to the library strictly through the C API.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "secgrid/secgrid.h"

namespace {

bool read_file(const std::string& path, std::string& out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return false;
    std::ostringstream ss;
    ss << in.rdbuf();
    out = ss.str();
    return true;
}

int cmd_run(const std::string& config_path, const std::string& script_path, uint64_t seed,
            const std::string& out_path) {
    std::string config_text;
    if (!config_path.empty() && !read_file(config_path, config_text)) {
        std::cerr << "error: cannot read config file '" << config_path << "'\n";
        return 2;
    }
    std::string script_text;
    if (!script_path.empty() && !read_file(script_path, script_text)) {
        std::cerr << "error: cannot read script file '" << script_path << "'\n";
        return 2;
    }

    secgrid_run* run = nullptr;
    secgrid_status st = secgrid_run_create(config_text.c_str(), script_text.c_str(), seed, &run);
    if (st != SECGRID_OK) {
        std::cerr << "error: " << secgrid_last_error() << "\n";
        return 2;
    }
    st = secgrid_run_execute(run);
    if (st != SECGRID_OK) {
        std::cerr << "error: " << secgrid_last_error() << "\n";
        secgrid_run_destroy(run);
        return 1;
    }

    std::ostream* out = &std::cout;
    std::ofstream file;
    if (!out_path.empty()) {
        file.open(out_path, std::ios::binary);
        if (!file) {
            std::cerr << "error: cannot open output file '" << out_path << "'\n";
            secgrid_run_destroy(run);
            return 2;
        }
        out = &file;
    }
    size_t events = secgrid_run_event_count(run);
    for (size_t i = 0; i < events; ++i) *out << secgrid_run_event_line(run, i) << "\n";

    std::cerr << "summary: " << secgrid_run_summary_json(run) << "\n";
    std::cerr << "accepted=" << secgrid_run_accepted_count(run)
              << " alarms=" << secgrid_run_alarm_count(run)
              << " aggregate=" << secgrid_run_aggregate_total(run) << "\n";
    secgrid_run_destroy(run);
    return 0;
}

int cmd_bench(const std::string& function, uint32_t users, const std::string& backend,
              uint32_t iterations, const std::string& out_path) {
    secgrid_bench_row rows[16];
    size_t count = sizeof(rows) / sizeof(rows[0]);
    secgrid_status st = secgrid_bench(function.c_str(), users, backend.c_str(), iterations, rows,
                                      &count);
    if (st != SECGRID_OK) {
        std::cerr << "error: " << secgrid_last_error() << "\n";
        return 1;
    }
    std::ostream* out = &std::cout;
    std::ofstream file;
    if (!out_path.empty()) {
        file.open(out_path, std::ios::binary);
        out = &file;
    }
    *out << "function,users,backend,median_ms,p95_ms,iterations\n";
    for (size_t i = 0; i < count; ++i) {
        *out << rows[i].function << ',' << rows[i].users << ',' << rows[i].backend << ','
             << rows[i].median_ms << ',' << rows[i].p95_ms << ',' << rows[i].iterations << "\n";
    }
    return 0;
}

int cmd_transmit_bench(uint32_t users, uint32_t iterations) {
    double median = 0;
    secgrid_status st = secgrid_transmit_bench(users, iterations, &median);
    if (st != SECGRID_OK) {
        std::cerr << "error: " << secgrid_last_error() << "\n";
        return 1;
    }
    std::cout << "users=" << users << " median_ms_per_batch=" << median << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"secgrid: smart-grid enclave simulator"};
    app.require_subcommand(1);

    std::string config_path, script_path, out_path;
    uint64_t seed = 1;
    auto* run = app.add_subcommand("run", "execute a scenario");
    run->add_option("--config", config_path, "scenario config file")->required();
    run->add_option("--script", script_path, "adversary script file");
    run->add_option("--seed", seed, "scenario seed");
    run->add_option("--out", out_path, "event-log output file (default stdout)");

    std::string function = "agg", backend = "enclave";
    uint32_t users = 1000, iterations = 30;
    auto* bench = app.add_subcommand("bench", "benchmark grid functions");
    bench->add_option("--function", function, "agg|pricing|forecast|micro")->required();
    bench->add_option("--users", users, "number of simulated meters");
    bench->add_option("--backend", backend, "enclave|paillier");
    bench->add_option("--iterations", iterations, "samples per point (>=30 for reports)");
    bench->add_option("--out", out_path, "CSV output file (default stdout)");

    uint32_t t_users = 1000, t_iters = 30;
    auto* transmit = app.add_subcommand("transmit-bench", "decrypt-into-enclave batch cost");
    transmit->add_option("--users", t_users, "reports per batch");
    transmit->add_option("--iterations", t_iters, "samples");

    auto* vectors = app.add_subcommand("vectors", "dump frozen crypto test vectors");

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) return cmd_run(config_path, script_path, seed, out_path);
    if (bench->parsed()) return cmd_bench(function, users, backend, iterations, out_path);
    if (transmit->parsed()) return cmd_transmit_bench(t_users, t_iters);
    if (vectors->parsed()) {
        std::fputs(secgrid_crypto_vectors(), stdout);
        return 0;
    }
    return 2;
}
