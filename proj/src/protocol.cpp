#include "secgrid/protocol.hpp"

#include <algorithm>

namespace secgrid {

namespace {

std::string sm_entity(std::uint64_t meter_id) { return "sm/" + std::to_string(meter_id); }
std::string ud_entity(std::uint64_t meter_id) { return "ud/" + std::to_string(meter_id); }
std::string session_label(std::uint64_t meter_id) {
    return "meter/" + std::to_string(meter_id) + "/session";
}
std::string lastreport_label(std::uint64_t meter_id) {
    return "meter/" + std::to_string(meter_id) + "/lastreport";
}

Bytes u64_bytes(std::uint64_t v) {
    Bytes b;
    put_u64(b, v);
    return b;
}

}  // namespace

std::string_view alarm_kind_name(AlarmKind k) {
    switch (k) {
        case AlarmKind::Tamper: return "Tamper";
        case AlarmKind::Replay: return "Replay";
        case AlarmKind::Rollback: return "Rollback";
        case AlarmKind::Freshness: return "Freshness";
        case AlarmKind::Unknown: return "Unknown";
        case AlarmKind::Restore: return "Restore";
        case AlarmKind::DoubleReg: return "DoubleReg";
        case AlarmKind::Timeout: return "Timeout";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// SmartMeterDevice
// ---------------------------------------------------------------------------

SmartMeterDevice::SmartMeterDevice(std::uint64_t meter_id, SymKey init_key, std::uint64_t seed,
                                   ProtocolTiming timing, std::string gateway_id)
    : Entity(sm_entity(meter_id)),
      meter_id_(meter_id),
      init_key_(init_key),
      init_aead_(init_key, iv_prefix(false, 0)),
      drbg_(seed, "sm/" + std::to_string(meter_id)),
      timing_(timing),
      gateway_id_(std::move(gateway_id)),
      ud_id_(ud_entity(meter_id)) {}

void SmartMeterDevice::set_schedule(std::vector<std::uint64_t> report_ticks,
                                    std::vector<std::uint64_t> readings) {
    report_ticks_ = std::move(report_ticks);
    readings_ = std::move(readings);
}

void SmartMeterDevice::begin_init(EntityContext& ctx) {
    if (phase_ != Phase::Idle) return;
    session_key_ = SymKey::generate(drbg_);
    session_aead_ = std::make_unique<AeadKey>(session_key_, iv_prefix(false, 0));

    Bytes plain;
    put_u64(plain, meter_id_);
    append(plain, session_key_.view());
    CipherEnvelope env = ae_encrypt(init_aead_, as_view(plain), as_view(aad_bytes(kAadInit)));

    init_frame_.clear();
    put_u64(init_frame_, meter_id_);
    put_envelope(init_frame_, env);
    ctx.send(ud_id_, MsgType::Init, init_frame_);
    phase_ = Phase::InitSent;
    retries_ = 0;
    arm_retry(ctx);
}

void SmartMeterDevice::arm_retry(EntityContext& ctx) {
    retry_deadline_ = ctx.tick() + timing_.retry_interval;
    ctx.wake_at(retry_deadline_, kTokenRetry);
}

void SmartMeterDevice::halt(EntityContext& ctx, std::string_view reason) {
    phase_ = Phase::Halted;
    ctx.note("sm_halt", {{"reason", std::string(reason)}});
    ctx.raise_alarm(AlarmKind::Timeout, meter_id_);
}

void SmartMeterDevice::try_send_head(EntityContext& ctx) {
    if (phase_ != Phase::Ready || awaiting_response_ || queue_.empty()) return;
    PendingReport& head = queue_.front();
    if (head.wire.empty()) {
        if (!nonce_next_) return;  // no fresh nonce yet
        head.ctr = ++ctr_;
        ReportPlain plain{meter_id_, head.reading, *nonce_next_, head.ctr};
        nonce_next_.reset();
        CipherEnvelope env = ae_encrypt(*session_aead_, as_view(encode_report_plain(plain)),
                                        as_view(aad_bytes(kAadReport)));
        head.wire = encode_report({meter_id_, env});
    }
    ctx.send(gateway_id_, MsgType::Report, head.wire);
    awaiting_response_ = true;
    retries_ = 0;
    arm_retry(ctx);
}

void SmartMeterDevice::on_wake(EntityContext& ctx, std::uint64_t token) {
    if (phase_ == Phase::Halted) return;
    if (token == kTokenBeginInit) {
        begin_init(ctx);
        return;
    }
    if (token == kTokenReportDue) {
        while (next_period_ < report_ticks_.size() && report_ticks_[next_period_] <= ctx.tick()) {
            queue_.push_back({readings_[next_period_], 0, {}});
            ++next_period_;
        }
        if (next_period_ < report_ticks_.size())
            ctx.wake_at(report_ticks_[next_period_], kTokenReportDue);
        try_send_head(ctx);
        return;
    }
    if (token == kTokenRetry) {
        if (ctx.tick() < retry_deadline_) return;  // superseded
        if (phase_ == Phase::InitSent) {
            if (retries_ >= timing_.retry_max) {
                halt(ctx, "init timeout");
                return;
            }
            ++retries_;
            ctx.send(ud_id_, MsgType::Init, init_frame_);
            arm_retry(ctx);
        } else if (phase_ == Phase::Ready && awaiting_response_) {
            if (retries_ >= timing_.retry_max) {
                halt(ctx, "report timeout");
                return;
            }
            ++retries_;
            if (!queue_.empty() && !queue_.front().wire.empty())
                ctx.send(gateway_id_, MsgType::Report, queue_.front().wire);
            arm_retry(ctx);
        }
    }
}

void SmartMeterDevice::on_message(EntityContext& ctx, const std::string& src, MsgType type,
                                  ByteView body) {
    if (phase_ == Phase::Halted) return;
    switch (type) {
        case MsgType::Echo: {
            ByteReader r(body);
            std::uint64_t id;
            std::optional<CipherEnvelope> env;
            try {
                id = r.u64();
                env = read_envelope(r);
            } catch (const std::out_of_range&) {
                return;
            }
            if (!env || id != meter_id_ || !session_aead_) return;
            auto plain = ae_decrypt(session_key_, *env, as_view(aad_bytes(kAadEcho)));
            if (!plain || plain->size() != 24) return;
            Nonce nonce;
            std::copy_n(plain->begin(), 16, nonce.begin());
            ByteReader tr(ByteView(plain->data() + 16, 8));
            std::uint64_t time = tr.u64();

            if (phase_ == Phase::InitSent) {
                init_nonce_ = nonce;
                nonce_next_ = nonce;
                time_offset_ = static_cast<std::int64_t>(time) -
                               static_cast<std::int64_t>(ctx.tick());
                Nonce bumped = nonce_plus_one(nonce);
                Bytes ack_plain(bumped.begin(), bumped.end());
                CipherEnvelope ack_env =
                    ae_encrypt(*session_aead_, as_view(ack_plain), as_view(aad_bytes(kAadAck)));
                ack_frame_.clear();
                put_u64(ack_frame_, meter_id_);
                put_envelope(ack_frame_, ack_env);
                ctx.send(gateway_id_, MsgType::EchoAck, ack_frame_);
                phase_ = Phase::Ready;
                ctr_ = 0;
                awaiting_response_ = false;
                retries_ = 0;
                retry_deadline_ = UINT64_MAX;
                ctx.note("sm_ready", {{"meter", std::to_string(meter_id_)}});
                // pull in any report periods that passed during initialization
                on_wake(ctx, kTokenReportDue);
            } else if (phase_ == Phase::Ready && nonce == init_nonce_) {
                // duplicate Echo: the gateway has not seen our EchoAck yet
                ctx.send(gateway_id_, MsgType::EchoAck, ack_frame_);
            }
            return;
        }
        case MsgType::ReportResp: {
            if (phase_ != Phase::Ready || !awaiting_response_ || queue_.empty() ||
                queue_.front().ctr == 0)
                return;
            ByteReader r(body);
            std::optional<CipherEnvelope> env;
            std::uint64_t id;
            try {
                id = r.u64();
                env = read_envelope(r);
            } catch (const std::out_of_range&) {
                return;
            }
            if (!env || id != meter_id_) return;
            auto plain = ae_decrypt(session_key_, *env,
                                    as_view(aad_with_ctr(kAadReportResp, queue_.front().ctr)));
            if (!plain || plain->size() != 16) return;  // stale or foreign response
            Nonce nonce;
            std::copy_n(plain->begin(), 16, nonce.begin());
            nonce_next_ = nonce;
            last_acked_ctr_ = queue_.front().ctr;
            last_acked_reading_ = queue_.front().reading;
            queue_.pop_front();
            awaiting_response_ = false;
            retries_ = 0;
            retry_deadline_ = UINT64_MAX;
            try_send_head(ctx);
            return;
        }
        case MsgType::RestartReportReq: {
            if (phase_ != Phase::Ready) return;
            ByteReader r(body);
            std::optional<CipherEnvelope> env;
            std::uint64_t id;
            try {
                id = r.u64();
                env = read_envelope(r);
            } catch (const std::out_of_range&) {
                return;
            }
            if (!env || id != meter_id_) return;
            auto plain = ae_decrypt(session_key_, *env, as_view(aad_bytes(kAadRestartReq)));
            if (!plain || plain->size() != 16) return;
            Nonce fresh;
            std::copy_n(plain->begin(), 16, fresh.begin());

            // Re-encrypt the latest report under the fresh nonce, ctr unchanged.
            ReportPlain resend{meter_id_, 0, fresh, 0};
            bool replace_head = false;
            if (!queue_.empty() && queue_.front().ctr != 0) {
                resend.reading = queue_.front().reading;
                resend.ctr = queue_.front().ctr;
                replace_head = true;
            } else if (last_acked_ctr_) {
                resend.reading = last_acked_reading_;
                resend.ctr = *last_acked_ctr_;
            }
            CipherEnvelope renv = ae_encrypt(*session_aead_, as_view(encode_report_plain(resend)),
                                             as_view(aad_bytes(kAadReport)));
            Bytes wire = encode_report({meter_id_, renv});
            if (replace_head) queue_.front().wire = wire;
            ctx.send(gateway_id_, MsgType::Report, wire);
            ctx.note("sm_restart_resend", {{"meter", std::to_string(meter_id_)},
                                           {"ctr", std::to_string(resend.ctr)}});
            return;
        }
        default:
            return;  // not addressed to a meter
    }
}

// ---------------------------------------------------------------------------
// UserDevice
// ---------------------------------------------------------------------------

UserDevice::UserDevice(std::uint64_t meter_id, Measurement expected_gw,
                       std::array<std::uint8_t, 32> attn_root_pk, std::uint64_t seed,
                       ProtocolTiming timing, std::string gateway_id)
    : Entity(ud_entity(meter_id)),
      meter_id_(meter_id),
      expected_gw_(expected_gw),
      attn_root_pk_(attn_root_pk),
      drbg_(seed, "ud/" + std::to_string(meter_id)),
      timing_(timing),
      gateway_id_(std::move(gateway_id)),
      sm_id_(sm_entity(meter_id)) {}

void UserDevice::arm_retry(EntityContext& ctx) {
    retry_deadline_ = ctx.tick() + timing_.retry_interval;
    ctx.wake_at(retry_deadline_, kTokenRetry);
}

void UserDevice::on_wake(EntityContext& ctx, std::uint64_t token) {
    if (phase_ == Phase::Halted || phase_ == Phase::Done) return;
    if (token == kTokenStart) {
        if (phase_ != Phase::Idle) return;
        phase_ = Phase::AwaitQuote;
        retries_ = 0;
        ctx.send(gateway_id_, MsgType::AttnRequest, {});
        arm_retry(ctx);
        return;
    }
    if (token == kTokenRetry) {
        if (ctx.tick() < retry_deadline_) return;
        if (retries_ >= timing_.retry_max) {
            phase_ = Phase::Halted;
            ctx.raise_alarm(AlarmKind::Timeout, meter_id_);
            return;
        }
        ++retries_;
        if (phase_ == Phase::AwaitQuote) {
            ctx.send(gateway_id_, MsgType::AttnRequest, {});
            arm_retry(ctx);
        } else if (phase_ == Phase::AwaitDone) {
            ctx.send(gateway_id_, MsgType::InitWrapped, wrapped_frame_);
            arm_retry(ctx);
        }
        // AwaitInit: the meter drives its own Init retries
    }
}

void UserDevice::on_message(EntityContext& ctx, const std::string& src, MsgType type,
                            ByteView body) {
    if (phase_ == Phase::Halted) return;
    switch (type) {
        case MsgType::AttnQuote: {
            if (phase_ != Phase::AwaitQuote) return;
            auto q = Quote::decode(body);
            if (!q) {
                ctx.raise_alarm(AlarmKind::Tamper, meter_id_);
                return;
            }
            if (!verify_quote(*q, expected_gw_, attn_root_pk_)) {
                ctx.raise_alarm(AlarmKind::Tamper, meter_id_);
                return;
            }
            if (q->user_data.size() != 64) {
                ctx.raise_alarm(AlarmKind::Tamper, meter_id_);
                return;
            }
            std::copy_n(q->user_data.begin(), 32, gw_sign_pk_.begin());
            std::copy_n(q->user_data.begin() + 32, 32, gw_wrap_pub_.bytes.begin());
            phase_ = Phase::AwaitInit;
            retry_deadline_ = UINT64_MAX;
            ctx.note("ud_verified_gateway", {{"meter", std::to_string(meter_id_)}});
            // Pairing trigger: a local action on the co-located meter.
            ctx.signal(sm_id_, kTokenBeginInit);
            return;
        }
        case MsgType::Init: {
            if (phase_ != Phase::AwaitInit && phase_ != Phase::AwaitDone) return;
            if (phase_ == Phase::AwaitDone && !wrapped_frame_.empty()) {
                // meter retried; our wrapped copy is already built
                ctx.send(gateway_id_, MsgType::InitWrapped, wrapped_frame_);
                return;
            }
            auto [eph_secret, eph_share] = dh_generate(drbg_);
            auto ss = dh_combine(eph_secret, gw_wrap_pub_);
            if (!ss) {
                ctx.raise_alarm(AlarmKind::Tamper, meter_id_);
                return;
            }
            SymKey wrap_key = kdf_session(*ss, kAadInitWrap);
            AeadKey wrap_aead(wrap_key, iv_prefix(false, 0));
            CipherEnvelope env =
                ae_encrypt(wrap_aead, body, as_view(aad_bytes(kAadInitWrap)));
            wrapped_frame_.clear();
            append(wrapped_frame_, {eph_share.bytes.data(), eph_share.bytes.size()});
            put_envelope(wrapped_frame_, env);
            ctx.send(gateway_id_, MsgType::InitWrapped, wrapped_frame_);
            phase_ = Phase::AwaitDone;
            retries_ = 0;
            arm_retry(ctx);
            return;
        }
        case MsgType::InitDone: {
            if (phase_ == Phase::AwaitDone) {
                phase_ = Phase::Done;
                retry_deadline_ = UINT64_MAX;
                ctx.note("ud_done", {{"meter", std::to_string(meter_id_)}});
            }
            return;
        }
        default:
            return;
    }
}

// ---------------------------------------------------------------------------
// GatewayEnclaveEntity
// ---------------------------------------------------------------------------

Bytes GatewayEnclaveEntity::MeterSession::serialize() const {
    Bytes out;
    append(out, key.view());
    put_u64(out, ctr_old);
    append(out, {nonce_expected.data(), nonce_expected.size()});
    append(out, {nonce_prev.data(), nonce_prev.size()});
    put_u32(out, static_cast<std::uint32_t>(last_resp_body.size()));
    append(out, as_view(last_resp_body));
    put_u32(out, static_cast<std::uint32_t>(last_report_frame.size()));
    append(out, as_view(last_report_frame));
    return out;
}

std::optional<GatewayEnclaveEntity::MeterSession> GatewayEnclaveEntity::MeterSession::deserialize(
    ByteView raw) {
    try {
        ByteReader r(raw);
        MeterSession s;
        s.key = SymKey::from_bytes(r.take(16));
        s.ctr_old = r.u64();
        s.nonce_expected = r.take_array<16>();
        s.nonce_prev = r.take_array<16>();
        s.last_resp_body = r.take_bytes(r.u32());
        s.last_report_frame = r.take_bytes(r.u32());
        if (!r.done()) return std::nullopt;
        return s;
    } catch (const std::out_of_range&) {
        return std::nullopt;
    }
}

GatewayEnclaveEntity::GatewayEnclaveEntity(std::unique_ptr<Enclave> enclave, VersionedStore& store,
                                           GatewayConfig config, std::uint64_t seed, bool restore)
    : Entity("gw"),
      enclave_(std::move(enclave)),
      store_(&store),
      config_(std::move(config)),
      drbg_(seed, "gw/epoch/" + std::to_string(enclave_->boot_epoch())),
      phase_(Phase::Boot) {
    restore_requested_ = restore;
}

std::uint64_t GatewayEnclaveEntity::enclave_now(std::uint64_t tick) const {
    if (!time_set_) return 0;
    return time_ref_ + (tick - tick_ref_);
}

void GatewayEnclaveEntity::raise(EntityContext& ctx, AlarmKind kind,
                                 std::optional<std::uint64_t> meter) {
    ctx.raise_alarm(kind, meter);
    // Alarms ride the next control-center window as function outputs.
    Bytes value;
    value.push_back(static_cast<std::uint8_t>(kind));
    put_u64(value, meter ? *meter : 0);
    put_u64(value, ctx.tick());
    pending_outputs_.push_back({OutputTag::Alarm, std::move(value)});
}

AeadKey& GatewayEnclaveEntity::meter_tx_key(std::uint64_t meter_id, const SymKey& key) {
    auto it = meter_tx_keys_.find(meter_id);
    if (it != meter_tx_keys_.end() && it->second->key() == key) return *it->second;
    auto aead = std::make_unique<AeadKey>(key, iv_prefix(true, enclave_->boot_epoch()));
    auto [pos, _] = meter_tx_keys_.insert_or_assign(meter_id, std::move(aead));
    return *pos->second;
}

void GatewayEnclaveEntity::seal_session(std::uint64_t meter_id, const MeterSession& s) {
    store_->store(enclave_->seal(session_label(meter_id), as_view(s.serialize())));
}

std::optional<GatewayEnclaveEntity::MeterSession> GatewayEnclaveEntity::load_session(
    EntityContext& ctx, std::uint64_t meter_id) {
    auto rec = store_->load(session_label(meter_id));
    if (!rec) return std::nullopt;
    auto plain = enclave_->unseal(*rec);
    if (!plain) return std::nullopt;
    return MeterSession::deserialize(as_view(*plain));
}

void GatewayEnclaveEntity::seal_cc_session() {
    Bytes state;
    append(state, cc_key_out_.view());
    append(state, cc_key_in_.view());
    append(state, {cc_pk_.data(), cc_pk_.size()});
    put_u64(state, cc_seq_out_);
    store_->store(enclave_->seal("gw/ccsession", as_view(state)));
}

void GatewayEnclaveEntity::seal_meter_index() {
    Bytes state;
    put_u32(state, static_cast<std::uint32_t>(meter_index_.size()));
    for (std::uint64_t id : meter_index_) put_u64(state, id);
    store_->store(enclave_->seal("gw/meters", as_view(state)));
}

void GatewayEnclaveEntity::begin_fresh_boot(EntityContext& ctx) {
    drbg_.fill(sign_seed_.data(), sign_seed_.size());
    sign_kp_ = SignKeypair::from_seed({sign_seed_.data(), sign_seed_.size()});
    std::tie(wrap_secret_, wrap_share_) = dh_generate(drbg_);
    std::tie(dh_a_, dh_share_a_) = dh_generate(drbg_);

    Bytes user_data;
    append(user_data, {sign_kp_.public_key.data(), sign_kp_.public_key.size()});
    append(user_data, {dh_share_a_.bytes.data(), dh_share_a_.bytes.size()});
    gw_hello_frame_ = enclave_->quote(as_view(user_data)).encode();
    ctx.send(config_.cc_id, MsgType::GwHello, gw_hello_frame_);
    phase_ = Phase::AwaitCcHello;
    hs_retries_ = 0;
    hs_retry_deadline_ = ctx.tick() + config_.timing.retry_interval;
    ctx.wake_at(hs_retry_deadline_, kTokenRetry);
}

void GatewayEnclaveEntity::handle_cc_hello(EntityContext& ctx, ByteView body) {
    if (phase_ != Phase::AwaitCcHello) return;
    auto q = Quote::decode(body);
    if (!q) {
        raise(ctx, AlarmKind::Tamper, std::nullopt);
        return;
    }
    if (!verify_quote(*q, config_.expected_cc, config_.attn_root_pk)) {
        raise(ctx, AlarmKind::Tamper, std::nullopt);
        return;
    }
    if (q->user_data.size() != 72) {
        raise(ctx, AlarmKind::Tamper, std::nullopt);
        return;
    }
    std::copy_n(q->user_data.begin(), 32, cc_pk_.begin());
    DhShare g_b;
    std::copy_n(q->user_data.begin() + 32, 32, g_b.bytes.begin());
    ByteReader tr(ByteView(q->user_data.data() + 64, 8));
    std::uint64_t cc_time = tr.u64();

    auto ss = dh_combine(dh_a_, g_b);
    if (!ss) {
        raise(ctx, AlarmKind::Tamper, std::nullopt);
        return;
    }
    // reference time = received time; counter starts at this tick
    time_ref_ = cc_time;
    tick_ref_ = ctx.tick();
    time_set_ = true;

    key_echo_ = kdf_session(*ss, "secgrid/gw->cc/echo");
    key_ack_cache_ = kdf_session(*ss, "secgrid/cc->gw/ack");
    cc_key_out_ = kdf_session(*ss, "secgrid/gw->cc/data");
    cc_key_in_ = kdf_session(*ss, "secgrid/cc->gw/data");
    echo_aead_ = std::make_unique<AeadKey>(key_echo_, iv_prefix(true, enclave_->boot_epoch()));
    cc_aead_out_ = std::make_unique<AeadKey>(cc_key_out_, iv_prefix(true, enclave_->boot_epoch()));

    send_time_echo(ctx);
    phase_ = Phase::AwaitCcAck;
    hs_retries_ = 0;
    hs_retry_deadline_ = ctx.tick() + config_.timing.retry_interval;
    ctx.wake_at(hs_retry_deadline_, kTokenRetry);
}

void GatewayEnclaveEntity::send_time_echo(EntityContext& ctx) {
    Bytes t = u64_bytes(enclave_now(ctx.tick()));
    CipherEnvelope env = ae_encrypt(*echo_aead_, as_view(t), as_view(aad_bytes(kAadTimeEcho)));
    Bytes env_enc;
    put_envelope(env_enc, env);
    Bytes msg = aad_bytes(kAadTimeEcho);
    append(msg, as_view(env_enc));
    Signature sig = sign(sign_kp_, as_view(msg));
    Bytes body = env_enc;
    put_u16(body, static_cast<std::uint16_t>(sig.size()));
    append(body, as_view(sig));
    ctx.send(config_.cc_id, MsgType::TimeEcho, body);
}

void GatewayEnclaveEntity::handle_cc_ack(EntityContext& ctx, ByteView body) {
    if (phase_ != Phase::AwaitCcAck) return;
    ByteReader r(body);
    auto env = read_envelope(r);
    if (!env) {
        raise(ctx, AlarmKind::Tamper, std::nullopt);
        return;
    }
    Bytes env_enc;
    put_envelope(env_enc, *env);
    Bytes sig;
    try {
        sig = r.take_bytes(r.u16());
    } catch (const std::out_of_range&) {
        raise(ctx, AlarmKind::Tamper, std::nullopt);
        return;
    }
    Bytes msg = aad_bytes(kAadCcAck);
    append(msg, as_view(env_enc));
    if (!verify(cc_pk_, as_view(msg), as_view(sig))) {
        raise(ctx, AlarmKind::Tamper, std::nullopt);
        return;
    }
    auto plain = ae_decrypt(key_ack_cache_, *env, as_view(aad_bytes(kAadCcAck)));
    if (!plain || plain->size() != 1 || (*plain)[0] != 0x01) {
        raise(ctx, AlarmKind::Tamper, std::nullopt);
        return;
    }

    // Both sides confirmed: persist identity and session.
    Bytes keys;
    append(keys, {sign_seed_.data(), sign_seed_.size()});
    append(keys, {wrap_secret_.bytes.data(), wrap_secret_.bytes.size()});
    store_->store(enclave_->seal("gw/keys", as_view(keys)));
    seal_cc_session();
    seal_meter_index();
    phase_ = Phase::Operational;
    hs_retry_deadline_ = UINT64_MAX;
    ctx.note("gw_session_established", {{"epoch", std::to_string(enclave_->boot_epoch())}});
    expected_close_tick_ = ctx.tick() + config_.report_interval + config_.timing.window_close_offset;
    ctx.wake_at(expected_close_tick_, kTokenWindowClose);
    pump_cc_stream(ctx);
}

void GatewayEnclaveEntity::handle_attn_request(EntityContext& ctx, const std::string& src) {
    if (phase_ != Phase::Operational && phase_ != Phase::Restoring) return;
    Bytes user_data;
    append(user_data, {sign_kp_.public_key.data(), sign_kp_.public_key.size()});
    append(user_data, {wrap_share_.bytes.data(), wrap_share_.bytes.size()});
    ctx.send(src, MsgType::AttnQuote, enclave_->quote(as_view(user_data)).encode());
}

void GatewayEnclaveEntity::handle_init_wrapped(EntityContext& ctx, const std::string& src,
                                               ByteView body) {
    if (phase_ != Phase::Operational && phase_ != Phase::Restoring) return;
    Hash256 digest = sha256(body);
    ByteReader r(body);
    DhShare eph;
    std::optional<CipherEnvelope> env;
    try {
        eph.bytes = r.take_array<32>();
        env = read_envelope(r);
    } catch (const std::out_of_range&) {
        raise(ctx, AlarmKind::Tamper, std::nullopt);
        return;
    }
    if (!env || !r.done()) {
        raise(ctx, AlarmKind::Tamper, std::nullopt);
        return;
    }
    auto ss = dh_combine(wrap_secret_, eph);
    if (!ss) {
        raise(ctx, AlarmKind::Tamper, std::nullopt);
        return;
    }
    SymKey wrap_key = kdf_session(*ss, kAadInitWrap);
    auto init_body = ae_decrypt(wrap_key, *env, as_view(aad_bytes(kAadInitWrap)));
    if (!init_body) {
        raise(ctx, AlarmKind::Tamper, std::nullopt);
        return;
    }
    std::uint64_t meter_id;
    try {
        ByteReader ir(as_view(*init_body));
        meter_id = ir.u64();
    } catch (const std::out_of_range&) {
        raise(ctx, AlarmKind::Tamper, std::nullopt);
        return;
    }

    auto done_it = completed_init_.find(meter_id);
    if (done_it != completed_init_.end() && done_it->second == digest) {
        // the meter is registered and this is the same wrapped Init; only
        // the Done notification can have been lost
        ctx.send(src, MsgType::InitDone, {});
        return;
    }

    auto it = init_pending_.find(meter_id);
    if (it != init_pending_.end()) {
        InitPending& pending = it->second;
        if (pending.wrapped_digest == digest) {
            // retransmission of the same wrapped Init
            if (pending.stage == InitPending::Stage::AwaitAck) {
                ctx.send(sm_entity(meter_id), MsgType::Echo, pending.echo_body);
                ctx.send(pending.ud_id, MsgType::InitDone, {});
            }
            return;
        }
        if (pending.stage != InitPending::Stage::AwaitCe) {
            // New wrapped bytes but the keyring fetch already happened: try
            // the cached init key so a transiently-tampered attempt can
            // recover without double-spending the keyring record.
            pending.init_body = *init_body;
            pending.wrapped_digest = digest;
            pending.ud_id = src;
            complete_init_with_key(ctx, meter_id, pending);
            return;
        }
        pending.init_body = *init_body;
        pending.wrapped_digest = digest;
        pending.ud_id = src;
        return;  // keyring fetch already in flight
    }

    InitPending pending;
    pending.stage = InitPending::Stage::AwaitCe;
    pending.init_body = *init_body;
    pending.wrapped_digest = digest;
    pending.ud_id = src;
    init_pending_.emplace(meter_id, std::move(pending));
    enqueue_cc(ctx, MsgType::GetInitKey, as_view(u64_bytes(meter_id)), kAadCcStream);
}

void GatewayEnclaveEntity::handle_init_key_resp(EntityContext& ctx, ByteView payload) {
    if (payload.size() != 25) {
        raise(ctx, AlarmKind::Tamper, std::nullopt);
        return;
    }
    ByteReader r(payload);
    std::uint64_t meter_id = r.u64();
    std::uint8_t status = r.u8();
    SymKey key = SymKey::from_bytes(r.take(16));

    auto it = init_pending_.find(meter_id);
    if (it == init_pending_.end()) return;
    if (status != 0) {
        // control enclave raised the authoritative alarm (DoubleReg/Unknown)
        ctx.note("gw_init_aborted", {{"meter", std::to_string(meter_id)},
                                     {"status", std::to_string(status)}});
        init_pending_.erase(it);
        return;
    }
    it->second.meter_init_key = key;
    it->second.stage = InitPending::Stage::HaveKey;
    complete_init_with_key(ctx, meter_id, it->second);
}

void GatewayEnclaveEntity::complete_init_with_key(EntityContext& ctx, std::uint64_t meter_id,
                                                  InitPending& pending) {
    std::optional<CipherEnvelope> inner;
    std::uint64_t clear_id = 0;
    try {
        ByteReader ir(as_view(pending.init_body));
        clear_id = ir.u64();
        inner = read_envelope(ir);
    } catch (const std::out_of_range&) {
        inner.reset();
    }
    if (!inner || clear_id != meter_id) {
        raise(ctx, AlarmKind::Tamper, meter_id);
        return;
    }
    auto plain = ae_decrypt(pending.meter_init_key, *inner, as_view(aad_bytes(kAadInit)));
    if (!plain || plain->size() != 24) {
        raise(ctx, AlarmKind::Tamper, meter_id);
        return;  // keep pending: an honest retry can still complete
    }
    ByteReader pr(as_view(*plain));
    std::uint64_t inner_id = pr.u64();
    if (inner_id != meter_id) {
        raise(ctx, AlarmKind::Tamper, meter_id);
        return;
    }
    pending.session_key = SymKey::from_bytes(pr.take(16));
    drbg_.fill(pending.nonce0.data(), pending.nonce0.size());

    Bytes echo_plain(pending.nonce0.begin(), pending.nonce0.end());
    put_u64(echo_plain, enclave_now(ctx.tick()));
    CipherEnvelope env = ae_encrypt(meter_tx_key(meter_id, pending.session_key),
                                    as_view(echo_plain), as_view(aad_bytes(kAadEcho)));
    pending.echo_body.clear();
    put_u64(pending.echo_body, meter_id);
    put_envelope(pending.echo_body, env);
    pending.stage = InitPending::Stage::AwaitAck;
    ctx.send(sm_entity(meter_id), MsgType::Echo, pending.echo_body);
    ctx.send(pending.ud_id, MsgType::InitDone, {});
}

void GatewayEnclaveEntity::handle_echo_ack(EntityContext& ctx, ByteView body) {
    ByteReader r(body);
    std::uint64_t meter_id;
    std::optional<CipherEnvelope> env;
    try {
        meter_id = r.u64();
        env = read_envelope(r);
    } catch (const std::out_of_range&) {
        raise(ctx, AlarmKind::Tamper, std::nullopt);
        return;
    }
    auto it = init_pending_.find(meter_id);
    if (it == init_pending_.end() || it->second.stage != InitPending::Stage::AwaitAck || !env)
        return;  // duplicate ack after completion
    auto plain = ae_decrypt(it->second.session_key, *env, as_view(aad_bytes(kAadAck)));
    if (!plain || plain->size() != 16) {
        raise(ctx, AlarmKind::Tamper, meter_id);
        return;
    }
    Nonce expect = nonce_plus_one(it->second.nonce0);
    if (!std::equal(expect.begin(), expect.end(), plain->begin())) {
        raise(ctx, AlarmKind::Freshness, meter_id);
        return;
    }
    finalize_session(ctx, meter_id, it->second);
}

void GatewayEnclaveEntity::finalize_session(EntityContext& ctx, std::uint64_t meter_id,
                                            InitPending& pending) {
    MeterSession s;
    s.key = pending.session_key;
    s.ctr_old = 0;
    s.nonce_expected = pending.nonce0;
    seal_session(meter_id, s);
    if (std::find(meter_index_.begin(), meter_index_.end(), meter_id) == meter_index_.end()) {
        meter_index_.push_back(meter_id);
        seal_meter_index();
    }
    completed_init_[meter_id] = pending.wrapped_digest;
    init_pending_.erase(meter_id);
    ctx.note("gw_registered", {{"meter", std::to_string(meter_id)}});
}

void GatewayEnclaveEntity::handle_report(EntityContext& ctx, ByteView body) {
    auto wire = decode_report(body);
    if (!wire) {
        raise(ctx, AlarmKind::Tamper, std::nullopt);
        return;
    }
    std::uint64_t meter_id = wire->meter_id_clear;

    if (phase_ == Phase::Restoring) {
        auto wait = restore_wait_.find(meter_id);
        if (wait != restore_wait_.end() && !wait->second.resolved) {
            handle_restore_report(ctx, *wire);
            return;
        }
    } else if (phase_ != Phase::Operational) {
        return;
    }

    // A valid first report doubles as the Ack if that message was lost.
    auto pending_it = init_pending_.find(meter_id);
    if (pending_it != init_pending_.end() &&
        pending_it->second.stage == InitPending::Stage::AwaitAck) {
        auto plain =
            ae_decrypt(pending_it->second.session_key, wire->envelope, as_view(aad_bytes(kAadReport)));
        if (plain) {
            auto rp = decode_report_plain(as_view(*plain));
            if (rp && rp->meter_id == meter_id && rp->ctr == 1 &&
                rp->nonce == pending_it->second.nonce0) {
                finalize_session(ctx, meter_id, pending_it->second);
            }
        }
    }

    auto session = load_session(ctx, meter_id);
    if (!session) {
        if (!store_->contains(session_label(meter_id))) {
            raise(ctx, AlarmKind::Unknown, meter_id);
        } else {
            raise(ctx, AlarmKind::Tamper, meter_id);  // sealed state unreadable
        }
        return;
    }

    auto plain = ae_decrypt(session->key, wire->envelope, as_view(aad_bytes(kAadReport)));
    if (!plain) {
        raise(ctx, AlarmKind::Tamper, meter_id);
        return;
    }
    auto rp = decode_report_plain(as_view(*plain));
    if (!rp || rp->meter_id != meter_id) {
        raise(ctx, AlarmKind::Tamper, meter_id);
        return;
    }

    if (rp->ctr == session->ctr_old && rp->nonce == session->nonce_prev &&
        Bytes(body.begin(), body.end()) == session->last_report_frame) {
        // The meter did not see our response; re-yield it unchanged.
        ctx.send(sm_entity(meter_id), MsgType::ReportResp, session->last_resp_body);
        ctx.note("gw_idempotent_resend", {{"meter", std::to_string(meter_id)},
                                          {"ctr", std::to_string(rp->ctr)}});
        return;
    }
    if (rp->ctr == session->ctr_old + 1) {
        if (rp->nonce != session->nonce_expected) {
            raise(ctx, AlarmKind::Freshness, meter_id);
            return;
        }
        accept_report(ctx, *wire, *rp, std::move(*session));
        return;
    }
    if (rp->ctr <= session->ctr_old) {
        raise(ctx, AlarmKind::Replay, meter_id);
        return;
    }
    // ctr jumped past old+1: our sealed state is behind the meter
    raise(ctx, AlarmKind::Rollback, meter_id);
}

void GatewayEnclaveEntity::accept_report(EntityContext& ctx, const ReportWire& wire,
                                         const ReportPlain& plain, MeterSession session) {
    Nonce next;
    drbg_.fill(next.data(), next.size());
    Bytes resp_plain(next.begin(), next.end());
    CipherEnvelope env = ae_encrypt(meter_tx_key(plain.meter_id, session.key),
                                    as_view(resp_plain),
                                    as_view(aad_with_ctr(kAadReportResp, plain.ctr)));
    Bytes resp_body;
    put_u64(resp_body, plain.meter_id);
    put_envelope(resp_body, env);

    Bytes frame = encode_report(wire);
    session.ctr_old = plain.ctr;
    session.nonce_prev = plain.nonce;
    session.nonce_expected = next;
    session.last_resp_body = resp_body;
    session.last_report_frame = frame;
    store_->store(enclave_->seal(lastreport_label(plain.meter_id), as_view(frame)));
    seal_session(plain.meter_id, session);

    window_readings_.emplace_back(plain.meter_id, plain.reading);
    ctx.record_accept(plain.meter_id, plain.ctr, plain.reading);
    ctx.send(sm_entity(plain.meter_id), MsgType::ReportResp, resp_body);
}

void GatewayEnclaveEntity::close_window(EntityContext& ctx) {
    std::uint64_t now = enclave_now(ctx.tick());
    std::uint32_t minute_of_day = static_cast<std::uint32_t>((now / 60) % (24 * 60));
    std::uint64_t day = now / 86400;
    std::uint32_t hour = static_cast<std::uint32_t>((now / 3600) % 24);

    if (window_readings_.empty() && pending_outputs_.empty()) return;

    std::vector<FunctionOutput> outputs = std::move(pending_outputs_);
    pending_outputs_.clear();

    if (!window_readings_.empty()) {
        UsageWindow w;
        w.area_id = 1;
        w.period_start = window_index_;
        w.span = 1;
        w.meter_count = static_cast<std::uint32_t>(window_readings_.size());
        for (const auto& [_, reading] : window_readings_) w.readings.push_back(reading);
        AggregateResult agg = aggregate_window(w);
        if (agg.overflow) {
            raise(ctx, AlarmKind::Unknown, std::nullopt);
            ctx.note("gw_aggregate_overflow", {});
            window_readings_.clear();
            return;
        }

        std::uint64_t price = 0;
        if (config_.tariff == "tou") {
            price = price_tou(minute_of_day, config_.tou);
        } else if (config_.tariff == "cpp") {
            price = price_cpp(day, minute_of_day, config_.tou, config_.cpp);
        } else {
            price = price_rtp(agg.total, config_.rtp_params.a[hour], config_.rtp_params.b[hour],
                              config_.rtp_m0);
        }

        aggregate_history_.insert(aggregate_history_.begin(), agg.total);
        if (aggregate_history_.size() > 64) aggregate_history_.resize(64);
        std::optional<std::uint64_t> forecast;
        if (aggregate_history_.size() >= config_.sts.phi_milli.size())
            forecast = forecast_sts(aggregate_history_, config_.sts, &drbg_);

        for (const auto& [meter, reading] : window_readings_) {
            bill_readings_[meter].push_back(reading);
            bill_prices_[meter].push_back(price);
        }

        Bytes agg_value = u64_bytes(window_index_);
        put_u64(agg_value, agg.total);
        outputs.push_back({OutputTag::Agg, agg_value});
        Bytes price_value = u64_bytes(window_index_);
        put_u64(price_value, price);
        outputs.push_back({OutputTag::Price, price_value});
        if (forecast) {
            Bytes f = u64_bytes(window_index_);
            put_u64(f, *forecast);
            outputs.push_back({OutputTag::Forecast, f});
        }
        window_readings_.clear();
        ++window_index_;

        if (config_.periods_per_day > 0 && window_index_ % config_.periods_per_day == 0) {
            // Day boundary: publish the day-ahead parameter prediction.
            PredictedDayParams pred = rtp_predict_day(config_.rtp_params, config_.rtp_params,
                                                      config_.rtp_params, config_.rtp_k);
            ctx.note("gw_predict_broadcast",
                     {{"day", std::to_string(day + 1)},
                      {"a0_micro", std::to_string(pred.a_micro[0])},
                      {"b0_micro", std::to_string(pred.b_micro[0])}});
        }
    }

    if (!outputs.empty())
        enqueue_cc(ctx, MsgType::CcWindow, as_view(encode_outputs(outputs)), kAadCcStream);
}

void GatewayEnclaveEntity::flush_bills(EntityContext& ctx) {
    if (bills_flushed_) return;
    close_window(ctx);
    std::vector<FunctionOutput> outputs;
    for (const auto& [meter, readings] : bill_readings_) {
        BillResult bill = compute_bill(readings, bill_prices_[meter]);
        if (bill.overflow) {
            raise(ctx, AlarmKind::Unknown, meter);
            continue;
        }
        Bytes value = u64_bytes(meter);
        put_u64(value, bill.amount);
        outputs.push_back({OutputTag::Bill, value});
    }
    if (!outputs.empty())
        enqueue_cc(ctx, MsgType::CcWindow, as_view(encode_outputs(outputs)), kAadCcStream);
    bills_flushed_ = true;
}

void GatewayEnclaveEntity::enqueue_cc(EntityContext& ctx, MsgType type, ByteView payload,
                                      std::string_view aad_base) {
    std::uint64_t seq = cc_seq_out_++;
    CipherEnvelope env = ae_encrypt(*cc_aead_out_, payload, as_view(aad_with_seq(aad_base, seq)));
    Bytes body = u64_bytes(seq);
    put_envelope(body, env);
    cc_queue_.push_back({std::move(body), type});
    seal_cc_session();
    pump_cc_stream(ctx);
}

void GatewayEnclaveEntity::pump_cc_stream(EntityContext& ctx) {
    if (cc_in_flight_ || cc_queue_.empty()) return;
    if (phase_ != Phase::Operational && phase_ != Phase::Restoring) return;
    ctx.send(config_.cc_id, cc_queue_.front().type, cc_queue_.front().body);
    cc_in_flight_ = true;
    cc_retries_ = 0;
    cc_retry_deadline_ = ctx.tick() + config_.timing.retry_interval;
    ctx.wake_at(cc_retry_deadline_, kTokenCcRetry);
}

void GatewayEnclaveEntity::handle_stream_resp(EntityContext& ctx, MsgType type, ByteView body) {
    if (!cc_in_flight_ || cc_queue_.empty()) return;
    ByteReader r(body);
    std::uint64_t seq;
    std::optional<CipherEnvelope> env;
    try {
        seq = r.u64();
        env = read_envelope(r);
    } catch (const std::out_of_range&) {
        raise(ctx, AlarmKind::Tamper, std::nullopt);
        return;
    }
    // the in-flight request's seq is the first 8 bytes of its body
    ByteReader fr(as_view(cc_queue_.front().body));
    std::uint64_t expect_seq = fr.u64();
    if (!env || seq != expect_seq) return;  // stale response
    auto payload = ae_decrypt(cc_key_in_, *env, as_view(aad_with_seq(kAadCcRespStream, seq)));
    if (!payload) {
        raise(ctx, AlarmKind::Tamper, std::nullopt);
        return;
    }

    MsgType req_type = cc_queue_.front().type;
    cc_queue_.pop_front();
    cc_in_flight_ = false;
    cc_retry_deadline_ = UINT64_MAX;

    if (req_type == MsgType::GetInitKey && type == MsgType::InitKeyResp) {
        handle_init_key_resp(ctx, as_view(*payload));
    } else if (req_type == MsgType::RestartTimeReq && type == MsgType::RestartTimeResp) {
        if (payload->size() == 8) {
            ByteReader tr(as_view(*payload));
            time_ref_ = tr.u64();
            tick_ref_ = ctx.tick();
            time_set_ = true;
            restore_time_ok_ = true;
            ctx.note("gw_time_restored", {{"time", std::to_string(time_ref_)}});
            maybe_finish_restore(ctx);
        }
    }
    // CcWindowAck carries no payload action
    pump_cc_stream(ctx);
}

// --- restart protocol -------------------------------------------------------

void GatewayEnclaveEntity::begin_restore(EntityContext& ctx) {
    auto fail = [&](std::optional<std::uint64_t> meter) {
        raise(ctx, AlarmKind::Restore, meter);
        phase_ = Phase::Failed;
    };

    auto keys_rec = store_->load("gw/keys");
    std::optional<Bytes> keys = keys_rec ? enclave_->unseal(*keys_rec) : std::nullopt;
    if (!keys || keys->size() != 64) {
        fail(std::nullopt);
        return;
    }
    std::copy_n(keys->begin(), 32, sign_seed_.begin());
    sign_kp_ = SignKeypair::from_seed({sign_seed_.data(), sign_seed_.size()});
    std::copy_n(keys->begin() + 32, 32, wrap_secret_.bytes.begin());
    {
        // recompute the public wrap share from the stored secret
        auto pub = dh_generate_public(wrap_secret_);
        if (!pub) {
            fail(std::nullopt);
            return;
        }
        wrap_share_ = *pub;
    }

    auto cc_rec = store_->load("gw/ccsession");
    std::optional<Bytes> cc = cc_rec ? enclave_->unseal(*cc_rec) : std::nullopt;
    if (!cc || cc->size() != 16 + 16 + 32 + 8) {
        fail(std::nullopt);
        return;
    }
    {
        ByteReader r(as_view(*cc));
        cc_key_out_ = SymKey::from_bytes(r.take(16));
        cc_key_in_ = SymKey::from_bytes(r.take(16));
        std::copy_n(cc->begin() + 32, 32, cc_pk_.begin());
        r.take(32);
        cc_seq_out_ = r.u64();
    }
    cc_aead_out_ = std::make_unique<AeadKey>(cc_key_out_, iv_prefix(true, enclave_->boot_epoch()));

    auto idx_rec = store_->load("gw/meters");
    std::optional<Bytes> idx = idx_rec ? enclave_->unseal(*idx_rec) : std::nullopt;
    if (!idx) {
        fail(std::nullopt);
        return;
    }
    meter_index_.clear();
    try {
        ByteReader r(as_view(*idx));
        std::uint32_t count = r.u32();
        for (std::uint32_t i = 0; i < count; ++i) meter_index_.push_back(r.u64());
        if (!r.done()) throw std::out_of_range("trailing");
    } catch (const std::out_of_range&) {
        fail(std::nullopt);
        return;
    }

    phase_ = Phase::Restoring;
    ctx.note("gw_restore_begin", {{"epoch", std::to_string(enclave_->boot_epoch())},
                                  {"meters", std::to_string(meter_index_.size())}});

    // fresh time from the control enclave
    Bytes marker{0x01};
    enqueue_cc(ctx, MsgType::RestartTimeReq, as_view(marker), kAadCcStream);

    // ask every meter for its latest report under a fresh nonce
    bool any_fail = false;
    for (std::uint64_t meter_id : meter_index_) {
        auto session = load_session(ctx, meter_id);
        if (!session) {
            raise(ctx, AlarmKind::Restore, meter_id);
            any_fail = true;
            continue;
        }
        RestoreWait wait;
        drbg_.fill(wait.fresh_nonce.data(), wait.fresh_nonce.size());
        restore_wait_[meter_id] = wait;
        Bytes req_plain(wait.fresh_nonce.begin(), wait.fresh_nonce.end());
        CipherEnvelope env = ae_encrypt(meter_tx_key(meter_id, session->key), as_view(req_plain),
                                        as_view(aad_bytes(kAadRestartReq)));
        Bytes body;
        put_u64(body, meter_id);
        put_envelope(body, env);
        ctx.send(sm_entity(meter_id), MsgType::RestartReportReq, body);
    }
    if (any_fail) {
        phase_ = Phase::Failed;
        return;
    }
    restore_retries_ = 0;
    restore_retry_deadline_ = ctx.tick() + config_.timing.retry_interval;
    ctx.wake_at(restore_retry_deadline_, kTokenRestoreRetry);
    maybe_finish_restore(ctx);
}

void GatewayEnclaveEntity::handle_restore_report(EntityContext& ctx, const ReportWire& wire) {
    std::uint64_t meter_id = wire.meter_id_clear;
    auto wait = restore_wait_.find(meter_id);
    if (wait == restore_wait_.end() || wait->second.resolved) return;
    auto session = load_session(ctx, meter_id);
    if (!session) {
        raise(ctx, AlarmKind::Restore, meter_id);
        wait->second.resolved = true;
        maybe_finish_restore(ctx);
        return;
    }
    auto plain = ae_decrypt(session->key, wire.envelope, as_view(aad_bytes(kAadReport)));
    if (!plain) {
        raise(ctx, AlarmKind::Tamper, meter_id);
        return;
    }
    auto rp = decode_report_plain(as_view(*plain));
    if (!rp || rp->meter_id != meter_id) {
        raise(ctx, AlarmKind::Tamper, meter_id);
        return;
    }
    if (rp->ctr == session->ctr_old) {
        if (rp->nonce != wait->second.fresh_nonce) return;  // stale in-flight copy
        wait->second.resolved = true;
        ctx.note("gw_restore_meter", {{"meter", std::to_string(meter_id)}, {"new", "0"}});
        maybe_finish_restore(ctx);
        return;
    }
    if (rp->ctr == session->ctr_old + 1) {
        if (rp->nonce != wait->second.fresh_nonce) return;  // stale in-flight copy
        accept_report(ctx, wire, *rp, std::move(*session));
        wait->second.resolved = true;
        ctx.note("gw_restore_meter", {{"meter", std::to_string(meter_id)}, {"new", "1"}});
        maybe_finish_restore(ctx);
        return;
    }
    if (rp->ctr > session->ctr_old + 1) {
        // the meter is ahead of our sealed state: storage was rolled back
        raise(ctx, AlarmKind::Rollback, meter_id);
        wait->second.resolved = true;
        maybe_finish_restore(ctx);
        return;
    }
    raise(ctx, AlarmKind::Replay, meter_id);
}

void GatewayEnclaveEntity::maybe_finish_restore(EntityContext& ctx) {
    if (phase_ != Phase::Restoring) return;
    if (!restore_time_ok_) return;
    for (const auto& [_, wait] : restore_wait_)
        if (!wait.resolved) return;
    phase_ = Phase::Operational;
    restore_retry_deadline_ = UINT64_MAX;
    ctx.note("gw_restored", {{"epoch", std::to_string(enclave_->boot_epoch())}});
    expected_close_tick_ = ctx.tick() + config_.report_interval + config_.timing.window_close_offset;
    ctx.wake_at(expected_close_tick_, kTokenWindowClose);
    pump_cc_stream(ctx);
}

// --- dispatch ----------------------------------------------------------------

void GatewayEnclaveEntity::on_wake(EntityContext& ctx, std::uint64_t token) {
    if (phase_ == Phase::Failed) return;
    switch (token) {
        case kTokenStart:
            if (phase_ == Phase::Boot) {
                if (restore_requested_)
                    begin_restore(ctx);
                else
                    begin_fresh_boot(ctx);
            }
            return;
        case kTokenRetry: {
            if (ctx.tick() < hs_retry_deadline_) return;
            if (phase_ == Phase::AwaitCcHello) {
                if (hs_retries_ >= config_.timing.retry_max) {
                    raise(ctx, AlarmKind::Timeout, std::nullopt);
                    phase_ = Phase::Failed;
                    return;
                }
                ++hs_retries_;
                ctx.send(config_.cc_id, MsgType::GwHello, gw_hello_frame_);
            } else if (phase_ == Phase::AwaitCcAck) {
                if (hs_retries_ >= config_.timing.retry_max) {
                    raise(ctx, AlarmKind::Timeout, std::nullopt);
                    phase_ = Phase::Failed;
                    return;
                }
                ++hs_retries_;
                send_time_echo(ctx);  // fresh timestamp each attempt
            } else {
                return;
            }
            hs_retry_deadline_ = ctx.tick() + config_.timing.retry_interval;
            ctx.wake_at(hs_retry_deadline_, kTokenRetry);
            return;
        }
        case kTokenCcRetry: {
            if (ctx.tick() < cc_retry_deadline_ || !cc_in_flight_) return;
            if (cc_retries_ >= config_.timing.retry_max) {
                raise(ctx, AlarmKind::Timeout, std::nullopt);
                if (phase_ == Phase::Restoring) phase_ = Phase::Failed;
                cc_in_flight_ = false;
                return;
            }
            ++cc_retries_;
            ctx.send(config_.cc_id, cc_queue_.front().type, cc_queue_.front().body);
            cc_retry_deadline_ = ctx.tick() + config_.timing.retry_interval;
            ctx.wake_at(cc_retry_deadline_, kTokenCcRetry);
            return;
        }
        case kTokenRestoreRetry: {
            if (ctx.tick() < restore_retry_deadline_ || phase_ != Phase::Restoring) return;
            if (restore_retries_ >= config_.timing.retry_max) {
                for (auto& [meter_id, wait] : restore_wait_) {
                    if (!wait.resolved) {
                        raise(ctx, AlarmKind::Timeout, meter_id);
                        wait.resolved = true;
                    }
                }
                maybe_finish_restore(ctx);
                return;
            }
            ++restore_retries_;
            for (auto& [meter_id, wait] : restore_wait_) {
                if (wait.resolved) continue;
                auto session = load_session(ctx, meter_id);
                if (!session) continue;
                Bytes req_plain(wait.fresh_nonce.begin(), wait.fresh_nonce.end());
                CipherEnvelope env =
                    ae_encrypt(meter_tx_key(meter_id, session->key), as_view(req_plain),
                               as_view(aad_bytes(kAadRestartReq)));
                Bytes body;
                put_u64(body, meter_id);
                put_envelope(body, env);
                ctx.send(sm_entity(meter_id), MsgType::RestartReportReq, body);
            }
            restore_retry_deadline_ = ctx.tick() + config_.timing.retry_interval;
            ctx.wake_at(restore_retry_deadline_, kTokenRestoreRetry);
            return;
        }
        case kTokenWindowClose: {
            if (ctx.tick() != expected_close_tick_) return;  // stale chain
            if (phase_ == Phase::Operational) close_window(ctx);
            expected_close_tick_ = ctx.tick() + config_.report_interval;
            ctx.wake_at(expected_close_tick_, kTokenWindowClose);
            return;
        }
        case kTokenFlushBills:
            if (phase_ == Phase::Operational) flush_bills(ctx);
            return;
        default:
            return;
    }
}

void GatewayEnclaveEntity::on_message(EntityContext& ctx, const std::string& src, MsgType type,
                                      ByteView body) {
    if (phase_ == Phase::Failed) return;
    switch (type) {
        case MsgType::CcHello: handle_cc_hello(ctx, body); return;
        case MsgType::CcAck: handle_cc_ack(ctx, body); return;
        case MsgType::AttnRequest: handle_attn_request(ctx, src); return;
        case MsgType::InitWrapped: handle_init_wrapped(ctx, src, body); return;
        case MsgType::InitKeyResp:
        case MsgType::CcWindowAck:
        case MsgType::RestartTimeResp: handle_stream_resp(ctx, type, body); return;
        case MsgType::EchoAck: handle_echo_ack(ctx, body); return;
        case MsgType::Report: handle_report(ctx, body); return;
        default:
            ctx.note("gw_ignored", {{"type", std::string(msg_type_name(type))}});
            return;
    }
}

// ---------------------------------------------------------------------------
// ControlEnclaveEntity
// ---------------------------------------------------------------------------

ControlEnclaveEntity::ControlEnclaveEntity(std::unique_ptr<Enclave> enclave, ControlConfig config,
                                           std::uint64_t seed,
                                           std::vector<std::pair<std::uint64_t, SymKey>> keys,
                                           UntrustedKeyStore& keyring_storage)
    : Entity("cc"),
      enclave_(std::move(enclave)),
      config_(std::move(config)),
      drbg_(seed, "cc") {
    keyring_.emplace(MerkleKeyStore::build(keys, *enclave_, keyring_storage));
    std::array<std::uint8_t, 32> seed_bytes;
    drbg_.fill(seed_bytes.data(), seed_bytes.size());
    sign_kp_ = SignKeypair::from_seed({seed_bytes.data(), seed_bytes.size()});
}

Bytes ControlEnclaveEntity::cc_hello_user_data(const DhShare& b_share, std::uint64_t now) const {
    Bytes user_data;
    append(user_data, {sign_kp_.public_key.data(), sign_kp_.public_key.size()});
    append(user_data, {b_share.bytes.data(), b_share.bytes.size()});
    put_u64(user_data, now);  // current wall-clock time
    return user_data;
}

void ControlEnclaveEntity::handle_gw_hello(EntityContext& ctx, const std::string& src,
                                           ByteView body) {
    if (session_ok_) {
        ctx.raise_alarm(AlarmKind::Replay, std::nullopt);
        return;
    }
    Bytes body_copy(body.begin(), body.end());
    if (pending_ && pending_->gw_hello_bytes == body_copy) {
        // retransmitted hello: keep g^b, refresh the embedded time
        Bytes ud = cc_hello_user_data(pending_->b_share, ctx.tick());
        ctx.send(src, MsgType::CcHello, enclave_->quote(as_view(ud)).encode());
        return;
    }
    auto q = Quote::decode(body);
    if (!q) {
        ctx.raise_alarm(AlarmKind::Tamper, std::nullopt);
        return;
    }
    if (!verify_quote(*q, config_.expected_gw, config_.attn_root_pk) || q->user_data.size() != 64) {
        ctx.raise_alarm(AlarmKind::Tamper, std::nullopt);
        return;
    }
    Pending p;
    p.gw_hello_bytes = std::move(body_copy);
    std::copy_n(q->user_data.begin(), 32, p.gw_pk.begin());
    DhShare g_a;
    std::copy_n(q->user_data.begin() + 32, 32, g_a.bytes.begin());

    auto [b_secret, b_share] = dh_generate(drbg_);
    auto ss = dh_combine(b_secret, g_a);
    if (!ss) {
        ctx.raise_alarm(AlarmKind::Tamper, std::nullopt);
        return;
    }
    p.ss = *ss;
    p.b_share = b_share;

    gw_id_ = src;
    Bytes ud = cc_hello_user_data(b_share, ctx.tick());
    ctx.send(src, MsgType::CcHello, enclave_->quote(as_view(ud)).encode());
    pending_ = std::move(p);
}

void ControlEnclaveEntity::handle_time_echo(EntityContext& ctx, const std::string& src,
                                            ByteView body) {
    if (!pending_) {
        if (session_ok_) ctx.send(src, MsgType::CcAck, cc_ack_frame_);  // ack was lost
        return;
    }
    ByteReader r(body);
    auto env = read_envelope(r);
    if (!env) {
        ctx.raise_alarm(AlarmKind::Tamper, std::nullopt);
        return;
    }
    Bytes sig;
    try {
        sig = r.take_bytes(r.u16());
    } catch (const std::out_of_range&) {
        ctx.raise_alarm(AlarmKind::Tamper, std::nullopt);
        return;
    }
    Bytes env_enc;
    put_envelope(env_enc, *env);
    Bytes msg = aad_bytes(kAadTimeEcho);
    append(msg, as_view(env_enc));
    if (!verify(pending_->gw_pk, as_view(msg), as_view(sig))) {
        ctx.raise_alarm(AlarmKind::Tamper, std::nullopt);
        return;
    }
    SymKey k_echo = kdf_session(pending_->ss, "secgrid/gw->cc/echo");
    auto plain = ae_decrypt(k_echo, *env, as_view(aad_bytes(kAadTimeEcho)));
    if (!plain || plain->size() != 8) {
        ctx.raise_alarm(AlarmKind::Tamper, std::nullopt);
        return;
    }
    ByteReader tr(as_view(*plain));
    std::uint64_t echoed = tr.u64();
    std::uint64_t now = ctx.tick();
    std::uint64_t diff = echoed > now ? echoed - now : now - echoed;
    if (diff > config_.timing.time_tolerance) {
        ctx.raise_alarm(AlarmKind::Freshness, std::nullopt);
        ctx.note("cc_time_echo_rejected", {{"diff", std::to_string(diff)}});
        return;  // keep pending: the gateway re-echoes with fresh time
    }

    key_in_ = kdf_session(pending_->ss, "secgrid/gw->cc/data");
    key_out_ = kdf_session(pending_->ss, "secgrid/cc->gw/data");
    key_echo_ = k_echo;
    key_ack_ = kdf_session(pending_->ss, "secgrid/cc->gw/ack");
    aead_out_ = std::make_unique<AeadKey>(key_out_, iv_prefix(true, 1));
    aead_ack_ = std::make_unique<AeadKey>(key_ack_, iv_prefix(false, 1));
    gw_pk_ = pending_->gw_pk;

    Bytes ack_plain{0x01};
    CipherEnvelope ack_env = ae_encrypt(*aead_ack_, as_view(ack_plain), as_view(aad_bytes(kAadCcAck)));
    Bytes ack_enc;
    put_envelope(ack_enc, ack_env);
    Bytes ack_msg = aad_bytes(kAadCcAck);
    append(ack_msg, as_view(ack_enc));
    Signature ack_sig = sign(sign_kp_, as_view(ack_msg));
    cc_ack_frame_ = ack_enc;
    put_u16(cc_ack_frame_, static_cast<std::uint16_t>(ack_sig.size()));
    append(cc_ack_frame_, as_view(ack_sig));

    // seal the session state (the paper's "seal g^ab")
    Bytes session;
    append(session, key_in_.view());
    append(session, key_out_.view());
    append(session, {gw_pk_.data(), gw_pk_.size()});
    sealed_session_ = enclave_->seal("cc/gwsession", as_view(session));

    session_ok_ = true;
    pending_.reset();
    ctx.note("cc_session_established", {});
    ctx.send(src, MsgType::CcAck, cc_ack_frame_);
}

Bytes ControlEnclaveEntity::respond_stream(EntityContext& ctx, MsgType resp_type,
                                           std::uint64_t seq, ByteView payload) {
    CipherEnvelope env =
        ae_encrypt(*aead_out_, payload, as_view(aad_with_seq(kAadCcRespStream, seq)));
    Bytes body = {};
    put_u64(body, seq);
    put_envelope(body, env);
    ctx.send(gw_id_, resp_type, body);
    return body;
}

void ControlEnclaveEntity::handle_cc_stream(EntityContext& ctx, const std::string& src,
                                            MsgType type, ByteView body) {
    if (!session_ok_) {
        ctx.note("cc_ignored", {{"reason", "no session"}});
        return;
    }
    Bytes body_copy(body.begin(), body.end());
    ByteReader r(body);
    std::uint64_t seq;
    std::optional<CipherEnvelope> env;
    try {
        seq = r.u64();
        env = read_envelope(r);
    } catch (const std::out_of_range&) {
        ctx.raise_alarm(AlarmKind::Tamper, std::nullopt);
        return;
    }
    if (!env || !r.done()) {
        ctx.raise_alarm(AlarmKind::Tamper, std::nullopt);
        return;
    }
    if (seq == seq_in_expected_ - 1 && body_copy == last_stream_req_) {
        // request retransmission: the previous response was lost
        ctx.send(src, last_stream_resp_type_, last_stream_resp_);
        return;
    }
    if (seq < seq_in_expected_) {
        ctx.raise_alarm(AlarmKind::Replay, std::nullopt);
        return;
    }
    if (seq > seq_in_expected_) {
        ctx.raise_alarm(AlarmKind::Freshness, std::nullopt);  // sequence gap
        return;
    }
    auto payload = ae_decrypt(key_in_, *env, as_view(aad_with_seq(kAadCcStream, seq)));
    if (!payload) {
        ctx.raise_alarm(AlarmKind::Tamper, std::nullopt);
        return;
    }

    Bytes resp;
    MsgType resp_type;
    switch (type) {
        case MsgType::GetInitKey: {
            if (payload->size() != 8) {
                ctx.raise_alarm(AlarmKind::Tamper, std::nullopt);
                return;
            }
            ByteReader mr(as_view(*payload));
            std::uint64_t meter_id = mr.u64();
            auto outcome = keyring_->get_and_void(meter_id);
            std::uint8_t status = 0;
            SymKey key{};
            switch (outcome.status) {
                case MerkleKeyStore::GetStatus::Ok:
                    key = outcome.key;
                    ctx.note("cc_key_released", {{"meter", std::to_string(meter_id)}});
                    break;
                case MerkleKeyStore::GetStatus::NotFound:
                    status = 1;
                    ctx.raise_alarm(AlarmKind::Unknown, meter_id);
                    break;
                case MerkleKeyStore::GetStatus::AlreadyVoid:
                    status = 2;
                    ctx.raise_alarm(AlarmKind::DoubleReg, meter_id);
                    break;
                case MerkleKeyStore::GetStatus::IntegrityFailure:
                    status = 3;
                    ctx.raise_alarm(AlarmKind::Tamper, meter_id);
                    break;
            }
            Bytes out = u64_bytes(meter_id);
            out.push_back(status);
            append(out, key.view());
            resp_type = MsgType::InitKeyResp;
            resp = respond_stream(ctx, resp_type, seq, as_view(out));
            break;
        }
        case MsgType::CcWindow: {
            auto outputs = decode_outputs(as_view(*payload));
            if (!outputs) {
                ctx.raise_alarm(AlarmKind::Tamper, std::nullopt);
                return;
            }
            windows_.push_back({seq, *outputs});
            ctx.record_cc_outputs(*outputs);
            resp_type = MsgType::CcWindowAck;
            resp = respond_stream(ctx, resp_type, seq, as_view(u64_bytes(seq)));
            break;
        }
        case MsgType::RestartTimeReq: {
            resp_type = MsgType::RestartTimeResp;
            resp = respond_stream(ctx, resp_type, seq, as_view(u64_bytes(ctx.tick())));
            ctx.note("cc_time_served", {{"tick", std::to_string(ctx.tick())}});
            break;
        }
        default:
            return;
    }
    last_stream_req_ = std::move(body_copy);
    last_stream_resp_ = std::move(resp);
    last_stream_resp_type_ = resp_type;
    ++seq_in_expected_;
}

void ControlEnclaveEntity::on_message(EntityContext& ctx, const std::string& src, MsgType type,
                                      ByteView body) {
    switch (type) {
        case MsgType::GwHello: handle_gw_hello(ctx, src, body); return;
        case MsgType::TimeEcho: handle_time_echo(ctx, src, body); return;
        case MsgType::GetInitKey:
        case MsgType::CcWindow:
        case MsgType::RestartTimeReq: handle_cc_stream(ctx, src, type, body); return;
        default:
            ctx.note("cc_ignored", {{"type", std::string(msg_type_name(type))}});
            return;
    }
}

}  // namespace secgrid
