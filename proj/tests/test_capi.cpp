#include <doctest.h>

#include <cstring>
#include <string>

#include "secgrid/secgrid.h"

TEST_CASE("c api: honest run through opaque handle") {
    const char* config = "meters = 2\nperiods = 3\nreport_interval = 60\n";
    secgrid_run* run = nullptr;
    REQUIRE(secgrid_run_create(config, nullptr, 5, &run) == SECGRID_OK);
    REQUIRE(run != nullptr);
    REQUIRE(secgrid_run_execute(run) == SECGRID_OK);

    CHECK(secgrid_run_accepted_count(run) == 6);
    CHECK(secgrid_run_alarm_count(run) == 0);
    CHECK(secgrid_run_aggregate_total(run) > 0);
    CHECK(secgrid_run_event_count(run) > 0);

    const char* first = secgrid_run_event_line(run, 0);
    REQUIRE(first != nullptr);
    CHECK(std::string(first).find("header") != std::string::npos);
    CHECK(secgrid_run_event_line(run, secgrid_run_event_count(run)) == nullptr);

    const char* summary = secgrid_run_summary_json(run);
    REQUIRE(summary != nullptr);
    CHECK(std::string(summary).find("\"accepted\":6") != std::string::npos);
    secgrid_run_destroy(run);
}

TEST_CASE("c api: script drives alarms") {
    const char* config = "meters = 2\nperiods = 3\nreport_interval = 60\n";
    const char* script = "replay src=sm/1 dst=gw type=Report ordinal=0 at=300\n";
    secgrid_run* run = nullptr;
    REQUIRE(secgrid_run_create(config, script, 5, &run) == SECGRID_OK);
    REQUIRE(secgrid_run_execute(run) == SECGRID_OK);
    CHECK(secgrid_run_alarm_count(run) == 1);
    secgrid_run_destroy(run);
}

TEST_CASE("c api: error paths set a message and status") {
    secgrid_run* run = nullptr;
    CHECK(secgrid_run_create("bogus-key = 1\n", nullptr, 1, &run) == SECGRID_ERR_CONFIG);
    CHECK(run == nullptr);
    CHECK(std::strlen(secgrid_last_error()) > 0);

    CHECK(secgrid_run_create("", "fly to=moon\n", 1, &run) == SECGRID_ERR_SCRIPT);
    CHECK(secgrid_run_create("", nullptr, 1, nullptr) == SECGRID_ERR_INVALID_ARG);

    // a script whose selector never matches fails the run loudly
    REQUIRE(secgrid_run_create("meters = 1\nperiods = 1\nreport_interval = 60\n",
                               "drop src=sm/9 dst=gw type=Report ordinal=0\n", 1,
                               &run) == SECGRID_OK);
    CHECK(secgrid_run_execute(run) == SECGRID_ERR_RUNTIME);
    secgrid_run_destroy(run);
}

TEST_CASE("c api: bench rows and vectors") {
    secgrid_bench_row rows[16];
    size_t count = 16;
    REQUIRE(secgrid_bench("pricing", 10, "enclave", 3, rows, &count) == SECGRID_OK);
    REQUIRE(count == 1);
    CHECK(std::string(rows[0].function) == "pricing");
    CHECK(std::string(rows[0].backend) == "enclave");
    CHECK(rows[0].iterations == 3);
    CHECK(rows[0].median_ms >= 0.0);

    count = 16;
    REQUIRE(secgrid_bench("micro", 0, "enclave", 2, rows, &count) == SECGRID_OK);
    CHECK(count == 6);

    count = 16;
    CHECK(secgrid_bench("nonsense", 0, "enclave", 2, rows, &count) == SECGRID_ERR_RUNTIME);

    double ms = -1;
    REQUIRE(secgrid_transmit_bench(16, 2, &ms) == SECGRID_OK);
    CHECK(ms >= 0.0);

    const char* vectors = secgrid_crypto_vectors();
    REQUIRE(vectors != nullptr);
    CHECK(std::string(vectors).find("aes-128-gcm") != std::string::npos);
    CHECK(std::string(vectors).find("ed25519") != std::string::npos);

    CHECK(secgrid_version() == 0x00010000u);
}
