#pragma once

#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "secgrid/enclave.hpp"
#include "secgrid/functions.hpp"
#include "secgrid/keyring.hpp"
#include "secgrid/wire.hpp"

namespace secgrid {

enum class AlarmKind : std::uint8_t {
    Tamper = 1,
    Replay = 2,
    Rollback = 3,
    Freshness = 4,
    Unknown = 5,
    Restore = 6,
    DoubleReg = 7,
    Timeout = 8,
};

std::string_view alarm_kind_name(AlarmKind k);

// Callback surface the simulator hands an entity while it runs. Entities see
// only their own monotonic tick rail and message/wake primitives.
class EntityContext {
public:
    virtual ~EntityContext() = default;

    virtual std::uint64_t tick() const = 0;
    virtual void send(const std::string& dst, MsgType type, Bytes body) = 0;
    virtual void wake_at(std::uint64_t tick, std::uint64_t token) = 0;
    // Local (non-network) signal to a co-located entity, e.g. the customer
    // pressing the meter's pairing button after the UD verified the gateway.
    virtual void signal(const std::string& entity, std::uint64_t token) = 0;
    virtual void raise_alarm(AlarmKind kind, std::optional<std::uint64_t> meter_id) = 0;
    virtual void note(std::string_view kind,
                      std::initializer_list<std::pair<std::string_view, std::string>> fields) = 0;
    // Ground-truth hooks for the harness: the gateway reports each accepted
    // reading, the control center reports decoded function outputs.
    virtual void record_accept(std::uint64_t meter_id, std::uint64_t ctr,
                               std::uint64_t reading) = 0;
    virtual void record_cc_outputs(const std::vector<FunctionOutput>& outputs) = 0;
};

class Entity {
public:
    explicit Entity(std::string id) : id_(std::move(id)) {}
    virtual ~Entity() = default;

    const std::string& id() const { return id_; }

    virtual void on_message(EntityContext& ctx, const std::string& src, MsgType type,
                            ByteView body) = 0;
    virtual void on_wake(EntityContext& ctx, std::uint64_t token) {}

private:
    std::string id_;
};

// Wake tokens shared across entities.
constexpr std::uint64_t kTokenBeginInit = 1;     // UD -> SM pairing trigger
constexpr std::uint64_t kTokenRetry = 2;         // retransmission check
constexpr std::uint64_t kTokenReportDue = 3;     // SM: a period's reading is due
constexpr std::uint64_t kTokenWindowClose = 4;   // GE: close current window
constexpr std::uint64_t kTokenStart = 5;         // begin boot/init protocol
constexpr std::uint64_t kTokenFlushBills = 6;    // GE: end-of-cycle billing
constexpr std::uint64_t kTokenCcRetry = 7;       // GE: cc-stream retransmission
constexpr std::uint64_t kTokenRestoreRetry = 8;  // GE: restart-protocol retransmission

struct ProtocolTiming {
    std::uint32_t retry_interval = 30;
    std::uint32_t retry_max = 8;
    std::uint32_t time_tolerance = 5;
    std::uint32_t window_close_offset = 30;
};

// --- smart meter -------------------------------------------------------------

class SmartMeterDevice final : public Entity {
public:
    SmartMeterDevice(std::uint64_t meter_id, SymKey init_key, std::uint64_t seed,
                     ProtocolTiming timing, std::string gateway_id);

    // Report schedule: reading r[p] becomes due at tick report_ticks[p].
    void set_schedule(std::vector<std::uint64_t> report_ticks, std::vector<std::uint64_t> readings);

    void on_message(EntityContext& ctx, const std::string& src, MsgType type,
                    ByteView body) override;
    void on_wake(EntityContext& ctx, std::uint64_t token) override;

    std::uint64_t meter_id() const { return meter_id_; }
    bool ready() const { return phase_ == Phase::Ready; }
    std::uint64_t current_ctr() const { return ctr_; }
    std::int64_t local_time_offset() const { return time_offset_; }

private:
    enum class Phase { Idle, InitSent, Ready, Halted };

    struct PendingReport {
        std::uint64_t reading = 0;
        std::uint64_t ctr = 0;  // 0 until assigned
        Bytes wire;             // current encoding, rebuilt on restart requests
    };

    void begin_init(EntityContext& ctx);
    void try_send_head(EntityContext& ctx);
    void arm_retry(EntityContext& ctx);
    void halt(EntityContext& ctx, std::string_view reason);

    std::uint64_t meter_id_;
    SymKey init_key_;
    AeadKey init_aead_;
    Drbg drbg_;
    ProtocolTiming timing_;
    std::string gateway_id_;
    std::string ud_id_;

    Phase phase_ = Phase::Idle;
    SymKey session_key_{};
    std::unique_ptr<AeadKey> session_aead_;  // SM lane of K_i
    std::optional<Nonce> nonce_next_;
    std::uint64_t ctr_ = 0;
    std::int64_t time_offset_ = 0;

    Bytes init_frame_;  // cached Init body for retransmission
    Bytes ack_frame_;   // cached EchoAck body
    Nonce init_nonce_{};

    std::vector<std::uint64_t> report_ticks_;
    std::vector<std::uint64_t> readings_;
    std::size_t next_period_ = 0;

    std::deque<PendingReport> queue_;
    std::optional<std::uint64_t> last_acked_ctr_;
    std::uint64_t last_acked_reading_ = 0;
    bool awaiting_response_ = false;
    std::uint32_t retries_ = 0;
    std::uint64_t retry_deadline_ = 0;
};

// --- user device -------------------------------------------------------------

class UserDevice final : public Entity {
public:
    UserDevice(std::uint64_t meter_id, Measurement expected_gw,
               std::array<std::uint8_t, 32> attn_root_pk, std::uint64_t seed,
               ProtocolTiming timing, std::string gateway_id);

    void on_message(EntityContext& ctx, const std::string& src, MsgType type,
                    ByteView body) override;
    void on_wake(EntityContext& ctx, std::uint64_t token) override;

private:
    enum class Phase { Idle, AwaitQuote, AwaitInit, AwaitDone, Done, Halted };

    void arm_retry(EntityContext& ctx);

    std::uint64_t meter_id_;
    Measurement expected_gw_;
    std::array<std::uint8_t, 32> attn_root_pk_;
    Drbg drbg_;
    ProtocolTiming timing_;
    std::string gateway_id_;
    std::string sm_id_;

    Phase phase_ = Phase::Idle;
    std::array<std::uint8_t, 32> gw_sign_pk_{};
    DhShare gw_wrap_pub_{};
    Bytes wrapped_frame_;  // cached InitWrapped body for retransmission
    std::uint32_t retries_ = 0;
    std::uint64_t retry_deadline_ = 0;
};

// --- gateway enclave -----------------------------------------------------------

struct GatewayConfig {
    Measurement expected_cc;
    std::array<std::uint8_t, 32> attn_root_pk{};
    std::string cc_id = "cc";
    ProtocolTiming timing;
    std::uint32_t report_interval = 900;
    std::uint32_t periods_per_day = 96;
    std::string tariff = "rtp";  // rtp | tou | cpp
    TouParams tou;
    CppCalendar cpp;
    std::uint64_t rtp_m0 = 0;
    RtpDayParams rtp_params;
    RtpPredictCoefficients rtp_k;
    StsModel sts;
};

class GatewayEnclaveEntity final : public Entity {
public:
    // `restore` selects the restart protocol over fresh initialization.
    GatewayEnclaveEntity(std::unique_ptr<Enclave> enclave, VersionedStore& store,
                         GatewayConfig config, std::uint64_t seed, bool restore);

    void on_message(EntityContext& ctx, const std::string& src, MsgType type,
                    ByteView body) override;
    void on_wake(EntityContext& ctx, std::uint64_t token) override;

    bool operational() const { return phase_ == Phase::Operational; }
    // Enclave-held time; the adversary-settable host clock never feeds this.
    std::uint64_t enclave_now(std::uint64_t tick) const;

private:
    enum class Phase { Boot, AwaitCcHello, AwaitCcAck, Operational, Restoring, Failed };

    struct MeterSession {
        SymKey key;
        std::uint64_t ctr_old = 0;
        Nonce nonce_expected{};
        Nonce nonce_prev{};
        Bytes last_resp_body;      // idempotent re-response
        Bytes last_report_frame;   // raw accepted report body

        Bytes serialize() const;
        static std::optional<MeterSession> deserialize(ByteView raw);
    };

    struct InitPending {
        enum class Stage { AwaitCe, HaveKey, AwaitAck };
        Stage stage = Stage::AwaitCe;
        Bytes init_body;       // decrypted Init payload from InitWrapped
        Hash256 wrapped_digest{};
        SymKey meter_init_key{};  // cached after the one keyring fetch
        SymKey session_key{};
        Nonce nonce0{};
        Bytes echo_body;
        std::string ud_id;
    };

    struct CcStreamItem {
        Bytes body;  // full message body incl. seq
        MsgType type;
    };

    // boot / session
    void begin_fresh_boot(EntityContext& ctx);
    void begin_restore(EntityContext& ctx);
    void handle_cc_hello(EntityContext& ctx, ByteView body);
    void handle_cc_ack(EntityContext& ctx, ByteView body);
    void send_time_echo(EntityContext& ctx);

    // smart-meter initialization
    void handle_attn_request(EntityContext& ctx, const std::string& src);
    void handle_init_wrapped(EntityContext& ctx, const std::string& src, ByteView body);
    void handle_init_key_resp(EntityContext& ctx, ByteView body);
    void complete_init_with_key(EntityContext& ctx, std::uint64_t meter_id, InitPending& pending);
    void handle_echo_ack(EntityContext& ctx, ByteView body);

    // periodic reports
    void handle_report(EntityContext& ctx, ByteView body);
    void accept_report(EntityContext& ctx, const ReportWire& wire, const ReportPlain& plain,
                       MeterSession session);
    void finalize_session(EntityContext& ctx, std::uint64_t meter_id, InitPending& pending);

    // gateway -> control-center stream
    void enqueue_cc(EntityContext& ctx, MsgType type, ByteView payload, std::string_view aad_base);
    void pump_cc_stream(EntityContext& ctx);
    void handle_stream_resp(EntityContext& ctx, MsgType type, ByteView body);

    // windows & functions
    void close_window(EntityContext& ctx);
    void flush_bills(EntityContext& ctx);

    // restart protocol
    void handle_restore_report(EntityContext& ctx, const ReportWire& wire);
    void maybe_finish_restore(EntityContext& ctx);

    // sealed-state helpers
    void seal_session(std::uint64_t meter_id, const MeterSession& s);
    std::optional<MeterSession> load_session(EntityContext& ctx, std::uint64_t meter_id);
    void seal_cc_session();
    void seal_meter_index();
    void raise(EntityContext& ctx, AlarmKind kind, std::optional<std::uint64_t> meter);
    AeadKey& meter_tx_key(std::uint64_t meter_id, const SymKey& key);

    std::unique_ptr<Enclave> enclave_;
    VersionedStore* store_;
    GatewayConfig config_;
    Drbg drbg_;
    Phase phase_ = Phase::Boot;
    bool restore_requested_ = false;

    // long-term keys
    SignKeypair sign_kp_{};
    std::array<std::uint8_t, 32> sign_seed_{};
    DhSecret wrap_secret_{};
    DhShare wrap_share_{};
    DhSecret dh_a_{};
    DhShare dh_share_a_{};
    Bytes gw_hello_frame_;

    // cc session
    std::array<std::uint8_t, 32> cc_pk_{};
    SymKey cc_key_out_{};
    SymKey cc_key_in_{};
    SymKey key_echo_{};
    SymKey key_ack_cache_{};
    std::unique_ptr<AeadKey> echo_aead_;
    std::unique_ptr<AeadKey> cc_aead_out_;
    std::uint64_t cc_seq_out_ = 1;
    std::deque<CcStreamItem> cc_queue_;
    bool cc_in_flight_ = false;
    std::uint32_t cc_retries_ = 0;
    std::uint64_t cc_retry_deadline_ = 0;
    std::uint32_t hs_retries_ = 0;
    std::uint64_t hs_retry_deadline_ = 0;

    // time
    bool time_set_ = false;
    std::uint64_t time_ref_ = 0;
    std::uint64_t tick_ref_ = 0;

    // meters
    std::map<std::uint64_t, InitPending> init_pending_;
    std::map<std::uint64_t, Hash256> completed_init_;  // dedup for lost Done notifications
    std::map<std::uint64_t, std::unique_ptr<AeadKey>> meter_tx_keys_;  // GE lane of K_i
    std::vector<std::uint64_t> meter_index_;

    // window machinery
    std::vector<std::pair<std::uint64_t, std::uint64_t>> window_readings_;  // (meter, wh)
    std::uint64_t window_index_ = 0;
    std::uint64_t expected_close_tick_ = 0;
    std::vector<std::uint64_t> aggregate_history_;  // newest first
    std::map<std::uint64_t, std::vector<std::uint64_t>> bill_readings_;
    std::map<std::uint64_t, std::vector<std::uint64_t>> bill_prices_;
    bool bills_flushed_ = false;
    std::vector<FunctionOutput> pending_outputs_;

    // restart
    struct RestoreWait {
        Nonce fresh_nonce{};
        bool resolved = false;
    };
    std::map<std::uint64_t, RestoreWait> restore_wait_;
    bool restore_time_ok_ = false;
    std::uint32_t restore_retries_ = 0;
    std::uint64_t restore_retry_deadline_ = 0;
};

// --- control enclave -----------------------------------------------------------

struct ControlConfig {
    Measurement expected_gw;
    std::array<std::uint8_t, 32> attn_root_pk{};
    ProtocolTiming timing;
};

class ControlEnclaveEntity final : public Entity {
public:
    ControlEnclaveEntity(std::unique_ptr<Enclave> enclave, ControlConfig config,
                         std::uint64_t seed,
                         std::vector<std::pair<std::uint64_t, SymKey>> provisioned_keys,
                         UntrustedKeyStore& keyring_storage);

    void on_message(EntityContext& ctx, const std::string& src, MsgType type,
                    ByteView body) override;

    bool session_established() const { return session_ok_; }
    const Hash256& keyring_root() const { return keyring_->root(); }

    // CC-side record of what the gateway reported, for assertions and logs.
    struct WindowRecord {
        std::uint64_t seq;
        std::vector<FunctionOutput> outputs;
    };
    const std::vector<WindowRecord>& windows() const { return windows_; }

private:
    void handle_gw_hello(EntityContext& ctx, const std::string& src, ByteView body);
    void handle_time_echo(EntityContext& ctx, const std::string& src, ByteView body);
    void handle_cc_stream(EntityContext& ctx, const std::string& src, MsgType type, ByteView body);
    Bytes respond_stream(EntityContext& ctx, MsgType req_type, std::uint64_t seq,
                         ByteView plaintext);

    std::unique_ptr<Enclave> enclave_;
    ControlConfig config_;
    Drbg drbg_;
    std::optional<MerkleKeyStore> keyring_;

    SignKeypair sign_kp_{};

    // pending handshake
    struct Pending {
        Bytes gw_hello_bytes;
        SharedSecret ss{};
        std::array<std::uint8_t, 32> gw_pk{};
        DhShare b_share{};
    };
    std::optional<Pending> pending_;
    Bytes cc_hello_user_data(const DhShare& b_share, std::uint64_t now) const;

    bool session_ok_ = false;
    std::string gw_id_ = "gw";
    std::array<std::uint8_t, 32> gw_pk_{};
    SymKey key_in_{};   // gw->cc data
    SymKey key_out_{};  // cc->gw data (responses)
    std::unique_ptr<AeadKey> aead_out_;
    std::unique_ptr<AeadKey> aead_ack_;
    SymKey key_echo_{};
    SymKey key_ack_{};
    std::uint64_t seq_in_expected_ = 1;
    Bytes cc_ack_frame_;
    Bytes last_stream_req_;  // idempotent re-answer cache
    Bytes last_stream_resp_;
    MsgType last_stream_resp_type_ = MsgType::CcWindowAck;
    SealedRecord sealed_session_{};

    std::vector<WindowRecord> windows_;
};

}  // namespace secgrid
