#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "secgrid/crypto.hpp"
#include "secgrid/oblivious.hpp"

namespace secgrid {

// All money values are integer milli-currency per kWh unless a name says
// otherwise; energy is integer watt-hours. No floating point anywhere near
// the oracle-checked paths.

struct UsageWindow {
    std::uint64_t area_id = 0;
    std::uint64_t period_start = 0;
    std::uint32_t span = 1;
    std::uint32_t meter_count = 0;
    std::vector<std::uint64_t> readings;  // in report-arrival order
};

struct AggregateResult {
    std::uint64_t total = 0;
    bool overflow = false;
};

// Arrival-order sum; branchless, overflow tracked by mask.
AggregateResult aggregate_window(const UsageWindow& w);

struct TouParams {
    std::uint64_t price = 0;
    std::uint64_t peak_surcharge = 0;
    // half-open [start, end) minute-of-day ranges, non-overlapping
    std::vector<std::pair<std::uint32_t, std::uint32_t>> peak_windows;
};

void validate_tou(const TouParams& params);  // throws std::invalid_argument

std::uint64_t price_tou(std::uint32_t minute_of_day, const TouParams& params);

struct CppCalendar {
    std::map<std::uint64_t, TouParams> event_days;
};

std::uint64_t price_cpp(std::uint64_t day, std::uint32_t minute_of_day, const TouParams& base,
                        const CppCalendar& cal);

// Leveled real-time price on secret usage: below_threshold_price when
// usage < threshold, at_or_above_price otherwise, selected branchlessly.
std::uint64_t price_rtp(std::uint64_t usage_secret, std::uint64_t below_threshold_price,
                        std::uint64_t at_or_above_price, std::uint64_t threshold);

struct RtpDayParams {
    std::array<std::uint64_t, 24> a{};  // price when usage < m0
    std::array<std::uint64_t, 24> b{};  // price when usage >= m0
};

// Day-ahead prediction: weighted blend of days t-1, t-2 and t-7 with
// milli-scaled coefficients. Exact integers: outputs are in micro-currency
// (input milli-currency x milli-weight), keeping the blend linear.
struct PredictedDayParams {
    std::array<std::uint64_t, 24> a_micro{};
    std::array<std::uint64_t, 24> b_micro{};
};

struct RtpPredictCoefficients {
    std::uint64_t k1_milli = 500;
    std::uint64_t k2_milli = 300;
    std::uint64_t k3_milli = 200;
};

PredictedDayParams rtp_predict_day(const RtpDayParams& day_minus_1,
                                   const RtpDayParams& day_minus_2,
                                   const RtpDayParams& day_minus_7,
                                   const RtpPredictCoefficients& k);

struct StsModel {
    std::vector<std::uint64_t> phi_milli;  // phi_1..phi_k, milli-scaled
    std::uint64_t sigma_milli = 0;         // noise amplitude; 0 = deterministic
};

// history[0] = Load(t-1), history[1] = Load(t-2), ... length >= order.
// Throws std::invalid_argument on insufficient history. Noise (when sigma>0
// and rng given) is seeded-Gaussian, clamped at zero.
std::uint64_t forecast_sts(std::span<const std::uint64_t> history, const StsModel& model,
                           RandomSource* rng = nullptr);

struct BillResult {
    std::uint64_t amount = 0;  // milli-currency x watt-hour units
    bool overflow = false;
};

// Sum of reading_h * price_h; readings secret, prices public, branchless.
BillResult compute_bill(std::span<const std::uint64_t> readings,
                        std::span<const std::uint64_t> prices);

// Tag-length-value records carried from gateway to control center.
enum class OutputTag : std::uint8_t { Agg = 1, Price = 2, Forecast = 3, Bill = 4, Alarm = 5 };

struct FunctionOutput {
    OutputTag tag;
    Bytes value;

    bool operator==(const FunctionOutput&) const = default;
};

Bytes encode_outputs(const std::vector<FunctionOutput>& outputs);
std::optional<std::vector<FunctionOutput>> decode_outputs(ByteView wire);

}  // namespace secgrid
