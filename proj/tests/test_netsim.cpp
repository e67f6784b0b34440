#include <doctest.h>

#include <json.hpp>

#include <algorithm>
#include <map>
#include <set>

#include "secgrid/config.hpp"
#include "secgrid/netsim.hpp"

using namespace secgrid;
using nlohmann::json;

namespace {

ScenarioConfig small_config(std::uint32_t meters = 3, std::uint32_t periods = 5) {
    ScenarioConfig cfg;
    cfg.meters = meters;
    cfg.periods = periods;
    cfg.report_interval = 60;
    return cfg;
}

// total sent by honest meters, brute force
std::uint64_t sent_total(const RunResult& r) {
    std::uint64_t total = 0;
    for (const auto& per_meter : r.sent_readings)
        for (auto v : per_meter) total += v;
    return total;
}

struct MsgEvent {
    std::string src, dst, type;
};

std::vector<MsgEvent> messages(const RunResult& r) {
    std::vector<MsgEvent> out;
    for (const auto& line : r.event_lines) {
        json j = json::parse(line);
        if (j.value("kind", "") == "msg")
            out.push_back({j["src"], j["dst"], j["type"]});
    }
    return out;
}

// per-meter accepted ctr sequences must be exactly 1,2,...,k
void check_ctr_contiguity(const RunResult& r) {
    std::map<std::uint64_t, std::uint64_t> last;
    for (const auto& a : r.accepted) {
        CHECK(a.ctr == last[a.meter_id] + 1);
        last[a.meter_id] = a.ctr;
    }
}

// every accepted (meter, ctr, reading) matches what the meter really sent
void check_no_corruption(const RunResult& r) {
    for (const auto& a : r.accepted) {
        REQUIRE(a.meter_id >= 1);
        REQUIRE(a.meter_id <= r.sent_readings.size());
        REQUIRE(a.ctr >= 1);
        REQUIRE(a.ctr <= r.sent_readings[a.meter_id - 1].size());
        CHECK(a.reading == r.sent_readings[a.meter_id - 1][a.ctr - 1]);
    }
}

}  // namespace

TEST_CASE("honest run: all reports accepted, zero alarms, exact aggregate") {
    ScenarioConfig cfg = small_config(5, 10);
    RunResult r = run_scenario(cfg, {}, 42);

    CHECK(r.accepted.size() == 50);
    CHECK(r.alarms.empty());
    CHECK(r.aggregate_total() == sent_total(r));
    check_ctr_contiguity(r);
    check_no_corruption(r);

    // bills reached the control center for every meter
    CHECK(r.bills.size() == 5);
}

TEST_CASE("honest run is alarm-free across seeds") {
    for (std::uint64_t seed : {1ull, 7ull, 99ull, 12345ull}) {
        RunResult r = run_scenario(small_config(2, 3), {}, seed);
        CHECK(r.alarms.empty());
        CHECK(r.accepted.size() == 6);
        CHECK(r.aggregate_total() == sent_total(r));
    }
}

TEST_CASE("gw/cc initialization exchanges exactly 4 protocol messages") {
    RunResult r = run_scenario(small_config(1, 1), {}, 3);
    int hello = 0, cc_hello = 0, echo = 0, ack = 0;
    for (const auto& m : messages(r)) {
        if (m.type == "GwHello") ++hello;
        if (m.type == "CcHello") ++cc_hello;
        if (m.type == "TimeEcho") ++echo;
        if (m.type == "CcAck") ++ack;
    }
    CHECK(hello == 1);
    CHECK(cc_hello == 1);
    CHECK(echo == 1);
    CHECK(ack == 1);
}

TEST_CASE("sm initialization exchanges exactly 8 keyed protocol messages") {
    RunResult r = run_scenario(small_config(1, 1), {}, 3);
    // the Done notification is excluded from the protocol count, matching the
    // paper-style accounting of the key-establishment exchange
    const std::set<std::string> core = {"AttnRequest", "AttnQuote", "Init", "InitWrapped",
                                        "GetInitKey", "InitKeyResp", "Echo", "EchoAck"};
    int count = 0;
    for (const auto& m : messages(r))
        if (core.count(m.type)) ++count;
    CHECK(count == 8);
}

TEST_CASE("event log is byte-identical for identical (config, script, seed)") {
    ScenarioConfig cfg = small_config();
    AdversaryScript script;
    inject_drop(script, {"sm/1", "gw", MsgType::Report, 1});
    RunResult a = run_scenario(cfg, script, 77);
    RunResult b = run_scenario(cfg, script, 77);
    REQUIRE(a.event_lines.size() == b.event_lines.size());
    CHECK(a.event_lines == b.event_lines);
    RunResult c = run_scenario(cfg, script, 78);
    CHECK(a.event_lines != c.event_lines);
}

TEST_CASE("replayed report raises exactly one Replay alarm and changes nothing") {
    ScenarioConfig cfg = small_config();
    AdversaryScript script;
    inject_replay(script, {"sm/3", "gw", MsgType::Report, 1}, 400);
    RunResult r = run_scenario(cfg, script, 42);

    CHECK(r.alarm_count(AlarmKind::Replay) == 1);
    CHECK(r.has_alarm(AlarmKind::Replay, 3));
    CHECK(r.alarms.size() == 1);
    CHECK(r.accepted.size() == 15);
    CHECK(r.aggregate_total() == sent_total(r));
    check_no_corruption(r);
}

TEST_CASE("tampered report raises Tamper and the meter recovers by resend") {
    ScenarioConfig cfg = small_config();
    AdversaryScript script;
    inject_tamper(script, {"sm/2", "gw", MsgType::Report, 1}, 400);
    RunResult r = run_scenario(cfg, script, 42);

    CHECK(r.has_alarm(AlarmKind::Tamper, 2));
    CHECK(r.accepted.size() == 15);  // retransmission healed the loss
    CHECK(r.aggregate_total() == sent_total(r));
    check_ctr_contiguity(r);
    check_no_corruption(r);
}

TEST_CASE("live session rollback is caught at the next honest report") {
    ScenarioConfig cfg = small_config();
    AdversaryScript script;
    // session version 1 = state after report ctr=1; rolling back after four
    // accepted reports leaves the meter several counters ahead of storage
    inject_rollback(script, "meter/3/session", 1, 260);
    RunResult r = run_scenario(cfg, script, 42);

    CHECK(r.has_alarm(AlarmKind::Rollback, 3));
    check_no_corruption(r);
    // meters 1 and 2 are unaffected
    std::map<std::uint64_t, std::size_t> per_meter;
    for (const auto& a : r.accepted) ++per_meter[a.meter_id];
    CHECK(per_meter[1] == 5);
    CHECK(per_meter[2] == 5);
}

TEST_CASE("byte-identical replayed wrapped Init is answered idempotently") {
    // indistinguishable from the user device's own retransmission, so it is
    // re-acknowledged without touching the keyring or the session
    ScenarioConfig cfg = small_config(2, 3);
    AdversaryScript script;
    inject_replay(script, {"ud/1", "gw", MsgType::InitWrapped, 0}, 250);
    RunResult r = run_scenario(cfg, script, 42);

    CHECK(r.alarms.empty());
    CHECK(r.accepted.size() == 6);
    CHECK(r.aggregate_total() == sent_total(r));
}

TEST_CASE("re-running sm_init for a registered meter: AlreadyVoid, DoubleReg alarm") {
    ScenarioConfig cfg = small_config(2, 3);
    AdversaryScript script;
    AdversaryAction reinit;
    reinit.kind = AdversaryAction::Kind::ReinitMeter;
    reinit.meter = 1;
    reinit.at_tick = 150;
    script.actions.push_back(reinit);
    RunResult r = run_scenario(cfg, script, 42);

    CHECK(r.has_alarm(AlarmKind::DoubleReg, 1));
    bool cc_raised = false;
    for (const auto& a : r.alarms)
        if (a.kind == AlarmKind::DoubleReg && a.source == "cc") cc_raised = true;
    CHECK(cc_raised);
    check_no_corruption(r);
}

TEST_CASE("dropped response: meter resends, gateway answers idempotently, no alarm") {
    ScenarioConfig cfg = small_config(2, 4);
    AdversaryScript script;
    inject_drop(script, {"gw", "sm/1", MsgType::ReportResp, 1});
    RunResult r = run_scenario(cfg, script, 42);

    CHECK(r.alarms.empty());
    CHECK(r.accepted.size() == 8);
    CHECK(r.aggregate_total() == sent_total(r));
    check_ctr_contiguity(r);

    // the wire shows an idempotent re-response, not a second acceptance
    bool idempotent = false;
    for (const auto& line : r.event_lines) {
        if (line.find("gw_idempotent_resend") != std::string::npos) idempotent = true;
    }
    CHECK(idempotent);
}

TEST_CASE("dropped report: accepted late via retransmission, no alarm, no gap") {
    ScenarioConfig cfg = small_config(2, 4);
    AdversaryScript script;
    inject_drop(script, {"sm/2", "gw", MsgType::Report, 2});
    RunResult r = run_scenario(cfg, script, 42);

    CHECK(r.alarms.empty());
    CHECK(r.accepted.size() == 8);
    CHECK(r.aggregate_total() == sent_total(r));
    check_ctr_contiguity(r);
    check_no_corruption(r);
}

TEST_CASE("dropped window ack: gateway retries, control center re-acks, totals intact") {
    ScenarioConfig cfg = small_config(2, 4);
    AdversaryScript script;
    inject_drop(script, {"cc", "gw", MsgType::CcWindowAck, 1});
    RunResult r = run_scenario(cfg, script, 42);

    CHECK(r.alarms.empty());
    CHECK(r.aggregate_total() == sent_total(r));  // no double-counted window
}

TEST_CASE("late replay of an old window raises Replay at the control center") {
    ScenarioConfig cfg = small_config(2, 5);
    AdversaryScript script;
    inject_replay(script, {"gw", "cc", MsgType::CcWindow, 0}, 450);
    RunResult r = run_scenario(cfg, script, 42);

    bool cc_replay = false;
    for (const auto& a : r.alarms)
        if (a.kind == AlarmKind::Replay && a.source == "cc") cc_replay = true;
    CHECK(cc_replay);
    CHECK(r.aggregate_total() == sent_total(r));
}

TEST_CASE("tampered CcWindow: Tamper at control center, stream recovers") {
    ScenarioConfig cfg = small_config(2, 4);
    AdversaryScript script;
    inject_tamper(script, {"gw", "cc", MsgType::CcWindow, 1}, 333);
    RunResult r = run_scenario(cfg, script, 42);

    bool cc_tamper = false;
    for (const auto& a : r.alarms)
        if (a.kind == AlarmKind::Tamper && a.source == "cc") cc_tamper = true;
    CHECK(cc_tamper);
    CHECK(r.aggregate_total() == sent_total(r));
}

TEST_CASE("tampered handshake quote: alarm, then retry establishes the session") {
    ScenarioConfig cfg = small_config(1, 2);
    AdversaryScript script;
    inject_tamper(script, {"cc", "gw", MsgType::CcHello, 0}, 111);
    RunResult r = run_scenario(cfg, script, 42);

    CHECK(r.has_alarm(AlarmKind::Tamper));
    CHECK(r.accepted.size() == 2);  // the system still came up
}

TEST_CASE("replayed GwHello after establishment is flagged by the control enclave") {
    ScenarioConfig cfg = small_config(1, 2);
    AdversaryScript script;
    inject_replay(script, {"gw", "cc", MsgType::GwHello, 0}, 200);
    RunResult r = run_scenario(cfg, script, 42);

    bool cc_replay = false;
    for (const auto& a : r.alarms)
        if (a.kind == AlarmKind::Replay && a.source == "cc") cc_replay = true;
    CHECK(cc_replay);
    CHECK(r.accepted.size() == 2);
}

TEST_CASE("time echo delayed past tolerance is rejected, fresh echo passes") {
    ScenarioConfig cfg = small_config(1, 2);
    AdversaryScript script;
    inject_delay(script, {"gw", "cc", MsgType::TimeEcho, 0}, 10);  // tolerance is 5
    RunResult r = run_scenario(cfg, script, 42);

    bool cc_freshness = false;
    for (const auto& a : r.alarms)
        if (a.kind == AlarmKind::Freshness && a.source == "cc") cc_freshness = true;
    CHECK(cc_freshness);
    // the gateway re-echoes with fresh time and the system comes up
    CHECK(r.accepted.size() == 2);
}

TEST_CASE("gateway restart: clean storage restores, ctr=old accepted") {
    ScenarioConfig cfg = small_config(3, 5);
    AdversaryScript script;
    AdversaryAction restart;
    restart.kind = AdversaryAction::Kind::RestartGateway;
    restart.at_tick = 330;  // between periods, after responses landed
    restart.duration = 4;
    script.actions.push_back(restart);
    RunResult r = run_scenario(cfg, script, 42);

    CHECK(r.gateway_restarts == 1);
    CHECK(r.alarms.empty());
    CHECK(r.accepted.size() == 15);
    check_ctr_contiguity(r);
    check_no_corruption(r);
    bool restored = false;
    for (const auto& line : r.event_lines)
        if (line.find("gw_restored") != std::string::npos) restored = true;
    CHECK(restored);
}

TEST_CASE("gateway restart over a report period: missed report accepted as ctr=old+1") {
    ScenarioConfig cfg = small_config(3, 5);
    AdversaryScript script;
    AdversaryAction restart;
    restart.kind = AdversaryAction::Kind::RestartGateway;
    // covers the tick where the final reports arrive: they are lost offline
    // and the restart protocol collects them as ctr = old+1
    restart.at_tick = 311;
    restart.duration = 6;
    script.actions.push_back(restart);
    RunResult r = run_scenario(cfg, script, 42);

    CHECK(r.gateway_restarts == 1);
    CHECK(r.alarms.empty());
    CHECK(r.accepted.size() == 15);  // nothing lost end to end
    check_ctr_contiguity(r);
    check_no_corruption(r);
    bool restored_with_new = false;
    for (const auto& line : r.event_lines)
        if (line.find("gw_restore_meter") != std::string::npos &&
            line.find("\"new\":\"1\"") != std::string::npos)
            restored_with_new = true;
    CHECK(restored_with_new);
}

TEST_CASE("restart after two-version session rollback raises Rollback") {
    ScenarioConfig cfg = small_config(3, 5);
    AdversaryScript script;
    inject_rollback(script, "meter/2/session", 1, 330);  // two reports behind
    AdversaryAction restart;
    restart.kind = AdversaryAction::Kind::RestartGateway;
    restart.at_tick = 331;
    restart.duration = 4;
    script.actions.push_back(restart);
    RunResult r = run_scenario(cfg, script, 42);

    CHECK(r.gateway_restarts == 1);
    CHECK(r.has_alarm(AlarmKind::Rollback, 2));
    check_no_corruption(r);
}

TEST_CASE("host clock skew never reaches enclave time") {
    ScenarioConfig cfg = small_config(2, 3);
    AdversaryScript script;
    AdversaryAction clock;
    clock.kind = AdversaryAction::Kind::SetHostClock;
    clock.at_tick = 200;
    clock.clock_offset = -86400;  // host clock yanked a day back
    script.actions.push_back(clock);
    RunResult r = run_scenario(cfg, script, 42);

    // protocol behavior is untouched: enclave time comes from the control
    // enclave plus the monotonic rail, not the host clock
    CHECK(r.alarms.empty());
    CHECK(r.accepted.size() == 6);
    RunResult honest = run_scenario(cfg, {}, 42);
    CHECK(r.accepted.size() == honest.accepted.size());
    CHECK(r.aggregate_total() == honest.aggregate_total());
}

TEST_CASE("no plaintext reading ever crosses a channel or reaches storage") {
    ScenarioConfig cfg = small_config(3, 4);
    // sentinel readings: large random values whose 8-byte patterns cannot
    // appear by accident
    cfg.min_reading = 1ull << 40;
    cfg.max_reading = (1ull << 40) + 1'000'000'000ull;
    RunResult r = run_scenario(cfg, {}, 4242);
    REQUIRE(r.accepted.size() == 12);

    auto contains = [](const Bytes& haystack, const Bytes& needle) {
        return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) !=
               haystack.end();
    };
    for (const auto& per_meter : r.sent_readings) {
        for (std::uint64_t reading : per_meter) {
            Bytes pattern;
            put_u64(pattern, reading);
            for (const auto& frame : r.transcript) CHECK_FALSE(contains(frame, pattern));
            for (const auto& blob : r.stored_blobs) CHECK_FALSE(contains(blob, pattern));
        }
    }
}

TEST_CASE("randomized single drops: no corruption, eventual convergence") {
    ScenarioConfig cfg = small_config(2, 3);
    RunResult honest = run_scenario(cfg, {}, 9);
    for (std::uint32_t ordinal = 0; ordinal < 3; ++ordinal) {
        for (std::uint32_t meter = 1; meter <= 2; ++meter) {
            AdversaryScript script;
            inject_drop(script, {"sm/" + std::to_string(meter), "gw", MsgType::Report, ordinal});
            RunResult r = run_scenario(cfg, script, 9);
            CHECK(r.alarms.empty());
            CHECK(r.accepted.size() == honest.accepted.size());
            CHECK(r.aggregate_total() == honest.aggregate_total());
            check_ctr_contiguity(r);
            check_no_corruption(r);
        }
    }
}

TEST_CASE("a selector that matches nothing fails the scenario loudly") {
    ScenarioConfig cfg = small_config(1, 1);
    AdversaryScript script;
    inject_drop(script, {"sm/9", "gw", MsgType::Report, 0});
    CHECK_THROWS_AS(run_scenario(cfg, script, 1), ScenarioError);
}

TEST_CASE("config validation rejects nonsense") {
    ScenarioConfig cfg = small_config();
    cfg.meters = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = small_config();
    cfg.max_reading = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = small_config();
    cfg.tariff = "flat";
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = small_config();
    cfg.meters = 1000;
    cfg.periods = 100000;
    cfg.max_reading = UINT64_MAX - 1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("config and script text parsers") {
    ScenarioConfig cfg = parse_scenario_config(
        "# comment\n"
        "meters = 4\n"
        "periods = 6\n"
        "report_interval = 120\n"
        "tariff = cpp\n"
        "tou.price = 90\n"
        "tou.surcharge = 30\n"
        "tou.peak = 1020-1260\n"
        "cpp.days = 2:70\n"
        "rtp.k = 500,300,200\n"
        "sts.phi = 600,400\n");
    CHECK(cfg.meters == 4);
    CHECK(cfg.periods == 6);
    CHECK(cfg.tariff == "cpp");
    CHECK(cfg.tou.price == 90);
    CHECK(cfg.cpp.event_days.count(2) == 1);
    CHECK(cfg.sts.phi_milli == std::vector<std::uint64_t>{600, 400});

    CHECK_THROWS_AS(parse_scenario_config("bogus = 1\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_scenario_config("meters 5\n"), std::invalid_argument);

    AdversaryScript s = parse_adversary_script(
        "drop src=sm/1 dst=gw type=Report ordinal=2\n"
        "tamper src=gw dst=cc type=CcWindow ordinal=0 bit=17\n"
        "replay src=sm/1 dst=gw type=Report ordinal=2 at=9000\n"
        "delay src=gw dst=cc type=CcWindow ordinal=1 ticks=30\n"
        "rollback label=meter/1/session version=2 at=5000\n"
        "restart at=7000 duration=10\n"
        "set-host-clock offset=-86400 at=6000\n");
    REQUIRE(s.actions.size() == 7);
    CHECK(s.actions[0].kind == AdversaryAction::Kind::Drop);
    CHECK(s.actions[1].bit == 17);
    CHECK(s.actions[2].at_tick == 9000);
    CHECK(s.actions[4].label == "meter/1/session");
    CHECK(s.actions[6].clock_offset == -86400);

    CHECK_THROWS_AS(parse_adversary_script("fly to=moon\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_adversary_script("drop src=sm/1\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_adversary_script("drop src=a dst=b type=Nope ordinal=0\n"),
                    std::invalid_argument);
}
