#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "secgrid/protocol.hpp"

namespace secgrid {

// --- adversary script ---------------------------------------------------------

// Selects a recorded or in-flight message by observable coordinates only.
struct MsgSelector {
    std::string src;
    std::string dst;
    MsgType type = MsgType::Report;
    std::uint32_t ordinal = 0;  // nth message matching (src, dst, type), 0-based

    bool operator==(const MsgSelector&) const = default;
};

struct AdversaryAction {
    enum class Kind {
        Drop,
        Replay,
        Tamper,
        Delay,
        RollbackStore,    // gateway sealed-record store
        RollbackKeyring,  // control-center keyring leaf store
        RestartGateway,
        SetHostClock,
        ReinitMeter,  // a cloned/reset device re-runs sm_init for a used id
    };

    Kind kind;
    MsgSelector selector;       // Drop / Replay / Tamper / Delay
    std::uint64_t at_tick = 0;  // Replay / Rollback* / RestartGateway / SetHostClock
    std::uint32_t bit = 0;      // Tamper: frame bit index to flip
    std::uint32_t ticks = 0;    // Delay
    std::string label;          // RollbackStore
    std::size_t version = 0;    // Rollback*
    std::uint32_t duration = 4; // RestartGateway downtime
    std::int64_t clock_offset = 0;
    std::uint64_t meter = 0;    // ReinitMeter
};

struct AdversaryScript {
    std::vector<AdversaryAction> actions;
};

// Script builders; selectors that never match make the run fail loudly.
void inject_drop(AdversaryScript& s, MsgSelector sel);
void inject_replay(AdversaryScript& s, MsgSelector sel, std::uint64_t at_tick);
void inject_tamper(AdversaryScript& s, MsgSelector sel, std::uint32_t bit);
void inject_delay(AdversaryScript& s, MsgSelector sel, std::uint32_t ticks);
void inject_rollback(AdversaryScript& s, std::string label, std::size_t version,
                     std::uint64_t at_tick);

// --- scenario configuration -----------------------------------------------------

struct ScenarioConfig {
    std::uint32_t meters = 5;
    std::uint32_t periods = 10;
    std::uint32_t report_interval = 900;
    std::uint64_t min_reading = 0;
    std::uint64_t max_reading = 1'000'000;  // exclusive bound, watt-hours
    std::uint32_t init_start = 10;  // after the gw/cc handshake settles
    std::uint32_t init_spacing = 8;
    std::uint32_t first_report_offset = 40;  // after last scheduled init
    std::uint32_t drain = 150;
    std::uint32_t periods_per_day = 96;
    ProtocolTiming timing;

    std::string tariff = "rtp";
    TouParams tou{100, 50, {{1020, 1260}}};  // peak 17:00-21:00
    CppCalendar cpp;
    std::uint64_t rtp_m0 = 0;  // 0 = auto: meters * max_reading / 2
    std::uint64_t rtp_a = 80;
    std::uint64_t rtp_b = 160;
    RtpPredictCoefficients rtp_k;
    StsModel sts{{1000}, 0};  // persistence model

    void validate() const;  // throws std::invalid_argument
};

// --- run results -----------------------------------------------------------------

struct AlarmEvent {
    std::uint64_t tick;
    std::string source;
    AlarmKind kind;
    std::optional<std::uint64_t> meter_id;
};

struct AcceptedReport {
    std::uint64_t meter_id;
    std::uint64_t ctr;
    std::uint64_t reading;
    std::uint64_t tick;
};

struct ScenarioError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunResult {
    std::vector<std::string> event_lines;  // line-delimited JSON
    std::vector<AlarmEvent> alarms;
    std::vector<AcceptedReport> accepted;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> aggregates;  // (window, total)
    std::map<std::uint64_t, std::uint64_t> bills;                     // meter -> amount
    std::vector<std::vector<std::uint64_t>> sent_readings;            // [meter-1][period]
    std::uint64_t final_tick = 0;
    std::uint64_t gateway_restarts = 0;
    std::string summary_json;

    // Every byte an adversary could have observed: channel frames and all
    // persisted record versions.
    std::vector<Bytes> transcript;
    std::vector<Bytes> stored_blobs;

    std::size_t alarm_count(AlarmKind kind) const;
    bool has_alarm(AlarmKind kind, std::optional<std::uint64_t> meter = std::nullopt) const;
    std::uint64_t aggregate_total() const;
};

RunResult run_scenario(const ScenarioConfig& config, const AdversaryScript& script,
                       std::uint64_t seed);

// --- discrete-event core (exposed for protocol-level tests) ----------------------

class Simulator {
public:
    explicit Simulator(std::uint64_t seed);
    ~Simulator();

    void add_entity(std::unique_ptr<Entity> entity);
    Entity* entity(const std::string& id);

    void set_script(const AdversaryScript& script);
    void set_offline(const std::string& id, bool offline);
    void post_wake(const std::string& id, std::uint64_t tick, std::uint64_t token);
    // Hook invoked when the adversary restarts the gateway; builds the
    // replacement entity (restore path).
    void set_gateway_factory(std::function<std::unique_ptr<Entity>()> factory);
    // Hook for ReinitMeter: builds a fresh (meter, user-device) pair.
    void set_meter_factory(
        std::function<std::pair<std::unique_ptr<Entity>, std::unique_ptr<Entity>>(std::uint64_t)>
            factory);
    void set_gateway_store(VersionedStore* store);
    void set_keyring_store(UntrustedKeyStore* store);

    // Runs until the event queue empties or `max_tick` passes.
    void run(std::uint64_t max_tick);

    std::uint64_t now() const { return now_; }
    std::int64_t gw_host_clock_offset() const { return host_clock_offset_; }

    const std::vector<AlarmEvent>& alarms() const { return alarms_; }
    const std::vector<std::string>& event_lines() const { return event_lines_; }
    std::vector<AcceptedReport>& accepted() { return accepted_; }
    const std::vector<Bytes>& transcript() const { return transcript_; }
    std::uint64_t gateway_restarts() const { return gateway_restarts_; }

    // CC-side outputs decoded from forwarded windows, filled by the control
    // entity through its context.
    std::vector<std::pair<std::uint64_t, std::uint64_t>> cc_aggregates;
    std::map<std::uint64_t, std::uint64_t> cc_bills;

    void emit_header(const std::map<std::string, std::string>& fields);
    void throw_if_unmatched_actions() const;

private:
    friend class SimContext;

    struct EventData {
        enum class Kind { Deliver, Wake, Action } kind;
        std::string src, dst;  // Deliver
        MsgType type{};
        Bytes frame;
        bool replayed = false;
        std::string entity;  // Wake
        std::uint64_t token = 0;
        std::size_t action_index = 0;  // Action
    };

    void schedule(std::uint64_t tick, EventData data);
    void process_action(std::size_t index);
    void log_json(std::initializer_list<std::pair<std::string_view, std::string>> fields);
    void send_from(const std::string& src, const std::string& dst, MsgType type, Bytes frame);
    void restart_gateway(std::uint32_t duration);

    std::uint64_t seed_;
    std::uint64_t now_ = 0;
    std::uint64_t event_seq_ = 0;

    std::map<std::string, std::unique_ptr<Entity>> entities_;
    std::set<std::string> offline_;

    struct RecordedMsg {
        std::string src, dst;
        MsgType type;
        Bytes frame;
    };
    std::vector<RecordedMsg> recorded_;
    std::map<std::tuple<std::string, std::string, std::uint8_t>, std::uint32_t> ordinal_counts_;

    AdversaryScript script_;
    std::vector<bool> action_done_;

    // (tick, insertion seq) -> event; deterministic total order.
    std::map<std::pair<std::uint64_t, std::uint64_t>, EventData> queue_;

    std::vector<AlarmEvent> alarms_;
    std::vector<AcceptedReport> accepted_;
    std::vector<std::string> event_lines_;
    std::vector<Bytes> transcript_;
    std::uint64_t gateway_restarts_ = 0;
    std::int64_t host_clock_offset_ = 0;

    std::function<std::unique_ptr<Entity>()> gateway_factory_;
    std::function<std::pair<std::unique_ptr<Entity>, std::unique_ptr<Entity>>(std::uint64_t)>
        meter_factory_;
    VersionedStore* gateway_store_ = nullptr;
    UntrustedKeyStore* keyring_store_ = nullptr;
};

}  // namespace secgrid
