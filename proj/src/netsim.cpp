#include "secgrid/netsim.hpp"

#include <json.hpp>

namespace secgrid {

using nlohmann::json;

void inject_drop(AdversaryScript& s, MsgSelector sel) {
    AdversaryAction a;
    a.kind = AdversaryAction::Kind::Drop;
    a.selector = std::move(sel);
    s.actions.push_back(std::move(a));
}

void inject_replay(AdversaryScript& s, MsgSelector sel, std::uint64_t at_tick) {
    AdversaryAction a;
    a.kind = AdversaryAction::Kind::Replay;
    a.selector = std::move(sel);
    a.at_tick = at_tick;
    s.actions.push_back(std::move(a));
}

void inject_tamper(AdversaryScript& s, MsgSelector sel, std::uint32_t bit) {
    AdversaryAction a;
    a.kind = AdversaryAction::Kind::Tamper;
    a.selector = std::move(sel);
    a.bit = bit;
    s.actions.push_back(std::move(a));
}

void inject_delay(AdversaryScript& s, MsgSelector sel, std::uint32_t ticks) {
    AdversaryAction a;
    a.kind = AdversaryAction::Kind::Delay;
    a.selector = std::move(sel);
    a.ticks = ticks;
    s.actions.push_back(std::move(a));
}

void inject_rollback(AdversaryScript& s, std::string label, std::size_t version,
                     std::uint64_t at_tick) {
    AdversaryAction a;
    a.kind = AdversaryAction::Kind::RollbackStore;
    a.label = std::move(label);
    a.version = version;
    a.at_tick = at_tick;
    s.actions.push_back(std::move(a));
}

void ScenarioConfig::validate() const {
    if (meters < 1 || meters > 1000) throw std::invalid_argument("meters must be in [1,1000]");
    if (periods < 1 || periods > 100000) throw std::invalid_argument("periods out of range");
    if (report_interval < 10) throw std::invalid_argument("report_interval too small");
    if (max_reading <= min_reading) throw std::invalid_argument("max_reading <= min_reading");
    unsigned __int128 worst = static_cast<unsigned __int128>(meters) * periods * max_reading;
    if (worst > UINT64_MAX) throw std::invalid_argument("reading bounds risk aggregate overflow");
    if (tariff != "rtp" && tariff != "tou" && tariff != "cpp")
        throw std::invalid_argument("tariff must be rtp|tou|cpp");
    if (sts.phi_milli.empty()) throw std::invalid_argument("sts model order must be >= 1");
    if (periods_per_day < 1) throw std::invalid_argument("periods_per_day must be >= 1");
    validate_tou(tou);
    for (const auto& [_, params] : cpp.event_days) validate_tou(params);
}

std::size_t RunResult::alarm_count(AlarmKind kind) const {
    std::size_t n = 0;
    for (const auto& a : alarms)
        if (a.kind == kind) ++n;
    return n;
}

bool RunResult::has_alarm(AlarmKind kind, std::optional<std::uint64_t> meter) const {
    for (const auto& a : alarms)
        if (a.kind == kind && (!meter || a.meter_id == meter)) return true;
    return false;
}

std::uint64_t RunResult::aggregate_total() const {
    std::uint64_t total = 0;
    for (const auto& [_, value] : aggregates) total += value;
    return total;
}

// ---------------------------------------------------------------------------
// Simulator
// ---------------------------------------------------------------------------

class SimContext final : public EntityContext {
public:
    SimContext(Simulator& sim, std::string entity_id)
        : sim_(sim), entity_id_(std::move(entity_id)) {}

    std::uint64_t tick() const override;
    void send(const std::string& dst, MsgType type, Bytes body) override;
    void wake_at(std::uint64_t tick, std::uint64_t token) override;
    void signal(const std::string& entity, std::uint64_t token) override;
    void raise_alarm(AlarmKind kind, std::optional<std::uint64_t> meter_id) override;
    void note(std::string_view kind,
              std::initializer_list<std::pair<std::string_view, std::string>> fields) override;
    void record_accept(std::uint64_t meter_id, std::uint64_t ctr, std::uint64_t reading) override;
    void record_cc_outputs(const std::vector<FunctionOutput>& outputs) override;

private:
    Simulator& sim_;
    std::string entity_id_;
};

Simulator::Simulator(std::uint64_t seed) : seed_(seed) {}
Simulator::~Simulator() = default;

void Simulator::add_entity(std::unique_ptr<Entity> entity) {
    std::string id = entity->id();
    entities_[id] = std::move(entity);
}

Entity* Simulator::entity(const std::string& id) {
    auto it = entities_.find(id);
    return it == entities_.end() ? nullptr : it->second.get();
}

void Simulator::set_script(const AdversaryScript& script) {
    script_ = script;
    action_done_.assign(script_.actions.size(), false);
    for (std::size_t i = 0; i < script_.actions.size(); ++i) {
        const auto& a = script_.actions[i];
        switch (a.kind) {
            case AdversaryAction::Kind::Replay:
            case AdversaryAction::Kind::RollbackStore:
            case AdversaryAction::Kind::RollbackKeyring:
            case AdversaryAction::Kind::RestartGateway:
            case AdversaryAction::Kind::SetHostClock:
            case AdversaryAction::Kind::ReinitMeter: {
                EventData d;
                d.kind = EventData::Kind::Action;
                d.action_index = i;
                schedule(a.at_tick, std::move(d));
                break;
            }
            default:
                break;  // send-path matched
        }
    }
}

void Simulator::set_offline(const std::string& id, bool offline) {
    if (offline)
        offline_.insert(id);
    else
        offline_.erase(id);
}

void Simulator::post_wake(const std::string& id, std::uint64_t tick, std::uint64_t token) {
    EventData d;
    d.kind = EventData::Kind::Wake;
    d.entity = id;
    d.token = token;
    schedule(tick, std::move(d));
}

void Simulator::set_gateway_factory(std::function<std::unique_ptr<Entity>()> factory) {
    gateway_factory_ = std::move(factory);
}

void Simulator::set_meter_factory(
    std::function<std::pair<std::unique_ptr<Entity>, std::unique_ptr<Entity>>(std::uint64_t)>
        factory) {
    meter_factory_ = std::move(factory);
}

void Simulator::set_gateway_store(VersionedStore* store) { gateway_store_ = store; }
void Simulator::set_keyring_store(UntrustedKeyStore* store) { keyring_store_ = store; }

void Simulator::schedule(std::uint64_t tick, EventData data) {
    queue_.emplace(std::make_pair(std::max(tick, now_), ++event_seq_), std::move(data));
}

void Simulator::log_json(
    std::initializer_list<std::pair<std::string_view, std::string>> fields) {
    json j;
    j["tick"] = now_;
    for (const auto& [k, v] : fields) j[std::string(k)] = v;
    event_lines_.push_back(j.dump());
}

void Simulator::emit_header(const std::map<std::string, std::string>& fields) {
    json j;
    j["tick"] = now_;
    j["kind"] = "header";
    for (const auto& [k, v] : fields) j[k] = v;
    event_lines_.push_back(j.dump());
}

void Simulator::send_from(const std::string& src, const std::string& dst, MsgType type,
                          Bytes frame) {
    transcript_.push_back(frame);
    std::uint32_t ordinal =
        ordinal_counts_[{src, dst, static_cast<std::uint8_t>(type)}]++;
    recorded_.push_back({src, dst, type, frame});

    bool dropped = false;
    std::uint32_t extra_delay = 0;
    for (std::size_t i = 0; i < script_.actions.size(); ++i) {
        if (action_done_[i]) continue;
        auto& a = script_.actions[i];
        bool send_path = a.kind == AdversaryAction::Kind::Drop ||
                         a.kind == AdversaryAction::Kind::Tamper ||
                         a.kind == AdversaryAction::Kind::Delay;
        if (!send_path) continue;
        if (a.selector.src != src || a.selector.dst != dst || a.selector.type != type ||
            a.selector.ordinal != ordinal)
            continue;
        action_done_[i] = true;
        if (a.kind == AdversaryAction::Kind::Drop) {
            dropped = true;
            log_json({{"kind", "adv_drop"},
                      {"src", src},
                      {"dst", dst},
                      {"type", std::string(msg_type_name(type))},
                      {"ordinal", std::to_string(ordinal)}});
        } else if (a.kind == AdversaryAction::Kind::Tamper) {
            std::uint32_t bit = a.bit % (frame.size() * 8);
            frame[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
            log_json({{"kind", "adv_tamper"},
                      {"src", src},
                      {"dst", dst},
                      {"type", std::string(msg_type_name(type))},
                      {"bit", std::to_string(bit)}});
        } else {
            extra_delay += a.ticks;
            log_json({{"kind", "adv_delay"},
                      {"src", src},
                      {"dst", dst},
                      {"type", std::string(msg_type_name(type))},
                      {"ticks", std::to_string(a.ticks)}});
        }
    }
    if (dropped) return;

    Hash256 digest = sha256(as_view(frame));
    log_json({{"kind", "msg"},
              {"src", src},
              {"dst", dst},
              {"type", std::string(msg_type_name(type))},
              {"len", std::to_string(frame.size())},
              {"digest", to_hex({digest.data(), 8})}});

    EventData d;
    d.kind = EventData::Kind::Deliver;
    d.src = src;
    d.dst = dst;
    d.type = type;
    d.frame = std::move(frame);
    schedule(now_ + 1 + extra_delay, std::move(d));
}

static constexpr std::size_t kRestartComplete = SIZE_MAX;

void Simulator::restart_gateway(std::uint32_t duration) {
    offline_.insert("gw");
    ++gateway_restarts_;
    log_json({{"kind", "gw_restart_begin"}, {"duration", std::to_string(duration)}});
    EventData d;
    d.kind = EventData::Kind::Action;
    d.action_index = kRestartComplete;
    schedule(now_ + duration, std::move(d));
}

void Simulator::process_action(std::size_t index) {
    if (index == kRestartComplete) {
        if (!gateway_factory_) return;
        entities_["gw"] = gateway_factory_();
        offline_.erase("gw");
        log_json({{"kind", "gw_restart_complete"}});
        post_wake("gw", now_, kTokenStart);
        return;
    }
    const auto& a = script_.actions[index];
    switch (a.kind) {
        case AdversaryAction::Kind::Replay: {
            std::uint32_t seen = 0;
            const RecordedMsg* found = nullptr;
            for (const auto& m : recorded_) {
                if (m.src == a.selector.src && m.dst == a.selector.dst &&
                    m.type == a.selector.type) {
                    if (seen == a.selector.ordinal) {
                        found = &m;
                        break;
                    }
                    ++seen;
                }
            }
            if (!found) return;  // stays unmatched -> loud failure at end
            action_done_[index] = true;
            log_json({{"kind", "adv_replay"},
                      {"src", found->src},
                      {"dst", found->dst},
                      {"type", std::string(msg_type_name(found->type))}});
            EventData d;
            d.kind = EventData::Kind::Deliver;
            d.src = found->src;
            d.dst = found->dst;
            d.type = found->type;
            d.frame = found->frame;
            d.replayed = true;
            schedule(now_ + 1, std::move(d));
            return;
        }
        case AdversaryAction::Kind::RollbackStore: {
            if (gateway_store_ && gateway_store_->rollback(a.label, a.version)) {
                action_done_[index] = true;
                log_json({{"kind", "adv_rollback"},
                          {"label", a.label},
                          {"version", std::to_string(a.version)}});
            }
            return;
        }
        case AdversaryAction::Kind::RollbackKeyring: {
            if (keyring_store_ && keyring_store_->rollback(a.version)) {
                action_done_[index] = true;
                log_json({{"kind", "adv_rollback_keyring"},
                          {"version", std::to_string(a.version)}});
            }
            return;
        }
        case AdversaryAction::Kind::RestartGateway:
            action_done_[index] = true;
            restart_gateway(a.duration);
            return;
        case AdversaryAction::Kind::SetHostClock:
            action_done_[index] = true;
            host_clock_offset_ = a.clock_offset;
            log_json({{"kind", "adv_set_host_clock"},
                      {"offset", std::to_string(a.clock_offset)}});
            return;
        case AdversaryAction::Kind::ReinitMeter: {
            if (!meter_factory_) return;
            auto [sm, ud] = meter_factory_(a.meter);
            if (!sm || !ud) return;
            action_done_[index] = true;
            std::string ud_id = ud->id();
            entities_[sm->id()] = std::move(sm);
            entities_[ud_id] = std::move(ud);
            log_json({{"kind", "adv_reinit_meter"}, {"meter", std::to_string(a.meter)}});
            post_wake(ud_id, now_, kTokenStart);
            return;
        }
        default:
            return;
    }
}

void Simulator::run(std::uint64_t max_tick) {
    while (!queue_.empty()) {
        auto it = queue_.begin();
        if (it->first.first > max_tick) break;
        now_ = it->first.first;
        EventData d = std::move(it->second);
        queue_.erase(it);

        switch (d.kind) {
            case EventData::Kind::Deliver: {
                if (offline_.count(d.dst)) {
                    log_json({{"kind", "msg_lost_offline"},
                              {"dst", d.dst},
                              {"type", std::string(msg_type_name(d.type))}});
                    break;
                }
                auto ent = entities_.find(d.dst);
                if (ent == entities_.end()) break;
                if (d.frame.empty() || !is_known_msg_type(d.frame[0])) {
                    // transport-level garbage; enclave hosts treat it as tampering
                    if (d.dst == "gw" || d.dst == "cc") {
                        alarms_.push_back({now_, d.dst, AlarmKind::Tamper, std::nullopt});
                        log_json({{"kind", "alarm"},
                                  {"source", d.dst},
                                  {"alarm", "Tamper"},
                                  {"reason", "garbage frame"}});
                    } else {
                        log_json({{"kind", "garbage_frame"}, {"dst", d.dst}});
                    }
                    break;
                }
                MsgType type = static_cast<MsgType>(d.frame[0]);
                SimContext ctx(*this, d.dst);
                ent->second->on_message(ctx, d.src, type,
                                        ByteView(d.frame.data() + 1, d.frame.size() - 1));
                break;
            }
            case EventData::Kind::Wake: {
                auto ent = entities_.find(d.entity);
                if (ent == entities_.end()) break;
                SimContext ctx(*this, d.entity);
                ent->second->on_wake(ctx, d.token);
                break;
            }
            case EventData::Kind::Action:
                process_action(d.action_index);
                break;
        }
    }
    if (now_ < max_tick) now_ = max_tick;
}

void Simulator::throw_if_unmatched_actions() const {
    for (std::size_t i = 0; i < action_done_.size(); ++i) {
        if (!action_done_[i])
            throw ScenarioError("adversary action " + std::to_string(i) +
                                " matched nothing (vacuous scenario)");
    }
}

// --- SimContext --------------------------------------------------------------

std::uint64_t SimContext::tick() const { return sim_.now_; }

void SimContext::send(const std::string& dst, MsgType type, Bytes body) {
    Bytes frame;
    frame.reserve(body.size() + 1);
    frame.push_back(static_cast<std::uint8_t>(type));
    append(frame, as_view(body));
    sim_.send_from(entity_id_, dst, type, std::move(frame));
}

void SimContext::wake_at(std::uint64_t tick, std::uint64_t token) {
    sim_.post_wake(entity_id_, tick, token);
}

void SimContext::signal(const std::string& entity, std::uint64_t token) {
    sim_.post_wake(entity, sim_.now_, token);
}

void SimContext::raise_alarm(AlarmKind kind, std::optional<std::uint64_t> meter_id) {
    sim_.alarms_.push_back({sim_.now_, entity_id_, kind, meter_id});
    sim_.log_json({{"kind", "alarm"},
                   {"source", entity_id_},
                   {"alarm", std::string(alarm_kind_name(kind))},
                   {"meter", meter_id ? std::to_string(*meter_id) : ""}});
}

void SimContext::note(std::string_view kind,
                      std::initializer_list<std::pair<std::string_view, std::string>> fields) {
    json j;
    j["tick"] = sim_.now_;
    j["kind"] = std::string(kind);
    j["entity"] = entity_id_;
    for (const auto& [k, v] : fields) j[std::string(k)] = v;
    sim_.event_lines_.push_back(j.dump());
}

void SimContext::record_accept(std::uint64_t meter_id, std::uint64_t ctr, std::uint64_t reading) {
    sim_.accepted_.push_back({meter_id, ctr, reading, sim_.now_});
    sim_.log_json({{"kind", "accept"},
                   {"meter", std::to_string(meter_id)},
                   {"ctr", std::to_string(ctr)},
                   {"reading", std::to_string(reading)}});
}

void SimContext::record_cc_outputs(const std::vector<FunctionOutput>& outputs) {
    for (const auto& o : outputs) {
        switch (o.tag) {
            case OutputTag::Agg: {
                if (o.value.size() != 16) break;
                ByteReader r(as_view(o.value));
                std::uint64_t window = r.u64(), total = r.u64();
                sim_.cc_aggregates.emplace_back(window, total);
                sim_.log_json({{"kind", "cc_output"},
                               {"tag", "AGG"},
                               {"window", std::to_string(window)},
                               {"value", std::to_string(total)}});
                break;
            }
            case OutputTag::Price: {
                if (o.value.size() != 16) break;
                ByteReader r(as_view(o.value));
                std::uint64_t window = r.u64(), price = r.u64();
                sim_.log_json({{"kind", "cc_output"},
                               {"tag", "PRICE"},
                               {"window", std::to_string(window)},
                               {"value", std::to_string(price)}});
                break;
            }
            case OutputTag::Forecast: {
                if (o.value.size() != 16) break;
                ByteReader r(as_view(o.value));
                std::uint64_t window = r.u64(), value = r.u64();
                sim_.log_json({{"kind", "cc_output"},
                               {"tag", "FORECAST"},
                               {"window", std::to_string(window)},
                               {"value", std::to_string(value)}});
                break;
            }
            case OutputTag::Bill: {
                if (o.value.size() != 16) break;
                ByteReader r(as_view(o.value));
                std::uint64_t meter = r.u64(), amount = r.u64();
                sim_.cc_bills[meter] = amount;
                sim_.log_json({{"kind", "cc_output"},
                               {"tag", "BILL"},
                               {"meter", std::to_string(meter)},
                               {"value", std::to_string(amount)}});
                break;
            }
            case OutputTag::Alarm: {
                if (o.value.size() != 17) break;
                ByteReader r(as_view(o.value));
                std::uint8_t kind = r.u8();
                std::uint64_t meter = r.u64();
                std::uint64_t tick = r.u64();
                sim_.log_json(
                    {{"kind", "alarm_forwarded"},
                     {"alarm", std::string(alarm_kind_name(static_cast<AlarmKind>(kind)))},
                     {"meter", std::to_string(meter)},
                     {"raised_at", std::to_string(tick)}});
                break;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// run_scenario
// ---------------------------------------------------------------------------

RunResult run_scenario(const ScenarioConfig& config, const AdversaryScript& script,
                       std::uint64_t seed) {
    config.validate();

    Drbg provision_rng(seed, "provision");
    Drbg readings_rng(seed, "readings");
    Drbg attn_rng(seed, "attn");
    Drbg machine_rng(seed, "machines");

    auto attn = std::make_shared<AttestationService>(attn_rng);
    auto cc_kernel = std::make_shared<EnclaveKernel>(machine_rng.bytes(32), attn.get());
    auto gw_kernel = std::make_shared<EnclaveKernel>(machine_rng.bytes(32), attn.get());
    auto gw_store = std::make_shared<VersionedStore>();
    auto keyring_store = std::make_shared<UntrustedKeyStore>();

    const std::string gw_identity = "secgrid/gateway-enclave/v1";
    const std::string cc_identity = "secgrid/control-enclave/v1";
    Measurement gw_measurement = measure_identity(gw_identity);
    Measurement cc_measurement = measure_identity(cc_identity);

    std::vector<std::pair<std::uint64_t, SymKey>> provisioned;
    std::vector<std::vector<std::uint64_t>> readings(config.meters);
    for (std::uint32_t i = 1; i <= config.meters; ++i)
        provisioned.emplace_back(i, SymKey::generate(provision_rng));
    for (std::uint32_t i = 0; i < config.meters; ++i) {
        readings[i].resize(config.periods);
        for (std::uint32_t p = 0; p < config.periods; ++p)
            readings[i][p] =
                config.min_reading + readings_rng.uniform(config.max_reading - config.min_reading);
    }

    Simulator sim(seed);

    ControlConfig cc_config;
    cc_config.expected_gw = gw_measurement;
    cc_config.attn_root_pk = attn->root_public_key();
    cc_config.timing = config.timing;
    sim.add_entity(std::make_unique<ControlEnclaveEntity>(cc_kernel->create(cc_identity), cc_config,
                                                          seed, provisioned, *keyring_store));

    GatewayConfig gw_config;
    gw_config.expected_cc = cc_measurement;
    gw_config.attn_root_pk = attn->root_public_key();
    gw_config.timing = config.timing;
    gw_config.report_interval = config.report_interval;
    gw_config.periods_per_day = config.periods_per_day;
    gw_config.tariff = config.tariff;
    gw_config.tou = config.tou;
    gw_config.cpp = config.cpp;
    gw_config.rtp_m0 = config.rtp_m0 != 0
                           ? config.rtp_m0
                           : static_cast<std::uint64_t>(config.meters) * config.max_reading / 2;
    gw_config.rtp_params.a.fill(config.rtp_a);
    gw_config.rtp_params.b.fill(config.rtp_b);
    gw_config.rtp_k = config.rtp_k;
    gw_config.sts = config.sts;

    sim.add_entity(std::make_unique<GatewayEnclaveEntity>(gw_kernel->create(gw_identity), *gw_store,
                                                          gw_config, seed, false));
    sim.set_gateway_factory([gw_kernel, gw_store, gw_config, gw_identity, seed]() {
        return std::make_unique<GatewayEnclaveEntity>(gw_kernel->create(gw_identity), *gw_store,
                                                      gw_config, seed, true);
    });
    sim.set_gateway_store(gw_store.get());
    sim.set_keyring_store(keyring_store.get());

    // ReinitMeter hands out a factory-reset device pair: same provisioned
    // init key, fresh randomness, no report schedule.
    sim.set_meter_factory(
        [provisioned, gw_measurement, attn, timing = config.timing,
         seed](std::uint64_t meter) -> std::pair<std::unique_ptr<Entity>, std::unique_ptr<Entity>> {
            if (meter == 0 || meter > provisioned.size()) return {nullptr, nullptr};
            std::uint64_t clone_seed = seed * 1000003ull + meter;
            auto sm = std::make_unique<SmartMeterDevice>(meter, provisioned[meter - 1].second,
                                                         clone_seed, timing, "gw");
            auto ud = std::make_unique<UserDevice>(meter, gw_measurement, attn->root_public_key(),
                                                   clone_seed, timing, "gw");
            return {std::move(sm), std::move(ud)};
        });

    std::uint64_t first_report =
        config.init_start + static_cast<std::uint64_t>(config.meters) * config.init_spacing +
        config.first_report_offset;
    for (std::uint32_t i = 1; i <= config.meters; ++i) {
        auto sm = std::make_unique<SmartMeterDevice>(i, provisioned[i - 1].second, seed,
                                                     config.timing, "gw");
        std::vector<std::uint64_t> ticks(config.periods);
        for (std::uint32_t p = 0; p < config.periods; ++p)
            ticks[p] = first_report + static_cast<std::uint64_t>(p) * config.report_interval;
        sm->set_schedule(std::move(ticks), readings[i - 1]);
        sim.add_entity(std::move(sm));
        sim.add_entity(std::make_unique<UserDevice>(i, gw_measurement, attn->root_public_key(),
                                                    seed, config.timing, "gw"));
        sim.post_wake("ud/" + std::to_string(i),
                      config.init_start + static_cast<std::uint64_t>(i - 1) * config.init_spacing,
                      kTokenStart);
    }
    sim.post_wake("gw", 1, kTokenStart);

    std::uint64_t last_report_due =
        first_report + static_cast<std::uint64_t>(config.periods - 1) * config.report_interval;
    std::uint64_t flush_tick = last_report_due + config.report_interval;
    sim.post_wake("gw", flush_tick, kTokenFlushBills);
    std::uint64_t max_tick = flush_tick + config.drain;

    sim.set_script(script);
    sim.emit_header({{"kind", "header"},
                     {"format", "secgrid-eventlog/v1"},
                     {"aead", "aes-128-gcm"},
                     {"dh_group", "x25519"},
                     {"signature", "ed25519"},
                     {"kdf", "hkdf-sha256"},
                     {"seed", std::to_string(seed)},
                     {"meters", std::to_string(config.meters)},
                     {"periods", std::to_string(config.periods)}});
    sim.run(max_tick);
    sim.throw_if_unmatched_actions();

    RunResult result;
    result.event_lines = sim.event_lines();
    result.alarms = sim.alarms();
    result.accepted = sim.accepted();
    result.aggregates = sim.cc_aggregates;
    result.bills = sim.cc_bills;
    result.sent_readings = readings;
    result.final_tick = sim.now();
    result.gateway_restarts = sim.gateway_restarts();
    result.transcript = sim.transcript();
    result.stored_blobs = gw_store->all_encoded_versions();
    for (auto& blob : keyring_store->all_exported_blobs())
        result.stored_blobs.push_back(std::move(blob));

    json summary;
    summary["accepted"] = result.accepted.size();
    summary["alarms"] = result.alarms.size();
    summary["aggregate_total"] = result.aggregate_total();
    summary["windows"] = result.aggregates.size();
    summary["meters"] = config.meters;
    summary["periods"] = config.periods;
    summary["final_tick"] = result.final_tick;
    summary["gateway_restarts"] = result.gateway_restarts;
    json alarm_kinds = json::object();
    for (const auto& a : result.alarms) {
        std::string name(alarm_kind_name(a.kind));
        alarm_kinds[name] = alarm_kinds.value(name, 0) + 1;
    }
    summary["alarm_kinds"] = alarm_kinds;
    result.summary_json = summary.dump();
    return result;
}

}  // namespace secgrid
