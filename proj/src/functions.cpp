#include "secgrid/functions.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace secgrid {

using obl::Mask;
using obl::o_greater;
using obl::o_move;
using obl::TracedSpan;

namespace {
// Trace labels for fixed arithmetic steps inside instrumented functions.
constexpr std::uint64_t kOpAccumulate = 1;
constexpr std::uint64_t kOpMulAcc = 2;
}  // namespace

AggregateResult aggregate_window(const UsageWindow& w) {
    TracedSpan<std::uint64_t> readings(std::span<const std::uint64_t>(w.readings));
    std::uint64_t total = 0;
    std::uint64_t overflow_mask = 0;
    for (std::size_t i = 0; i < readings.size(); ++i) {
        std::uint64_t next = total + readings[i];
        obl::trace_op(kOpAccumulate);
        // carry out of the add: next < total, branchlessly
        overflow_mask |= o_greater(total, next).raw();
        total = next;
    }
    return {total, overflow_mask != 0};
}

void validate_tou(const TouParams& params) {
    auto windows = params.peak_windows;
    std::sort(windows.begin(), windows.end());
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (windows[i].first >= windows[i].second || windows[i].second > 24 * 60)
            throw std::invalid_argument("bad peak window");
        if (i > 0 && windows[i].first < windows[i - 1].second)
            throw std::invalid_argument("overlapping peak windows");
    }
}

std::uint64_t price_tou(std::uint32_t minute_of_day, const TouParams& params) {
    // The condition is public time, so an ordinary branch is fine here.
    for (const auto& [start, end] : params.peak_windows)
        if (minute_of_day >= start && minute_of_day < end)
            return params.price + params.peak_surcharge;
    return params.price;
}

std::uint64_t price_cpp(std::uint64_t day, std::uint32_t minute_of_day, const TouParams& base,
                        const CppCalendar& cal) {
    auto it = cal.event_days.find(day);
    return price_tou(minute_of_day, it != cal.event_days.end() ? it->second : base);
}

std::uint64_t price_rtp(std::uint64_t usage_secret, std::uint64_t below_threshold_price,
                        std::uint64_t at_or_above_price, std::uint64_t threshold) {
    Mask below = o_greater(threshold, usage_secret);  // usage < m0
    return o_move(below, below_threshold_price, at_or_above_price);
}

PredictedDayParams rtp_predict_day(const RtpDayParams& day_minus_1,
                                   const RtpDayParams& day_minus_2,
                                   const RtpDayParams& day_minus_7,
                                   const RtpPredictCoefficients& k) {
    auto blend = [&](std::uint64_t x1, std::uint64_t x2, std::uint64_t x7) {
        unsigned __int128 v = static_cast<unsigned __int128>(k.k1_milli) * x1 +
                              static_cast<unsigned __int128>(k.k2_milli) * x2 +
                              static_cast<unsigned __int128>(k.k3_milli) * x7;
        if (v > UINT64_MAX) throw std::overflow_error("prediction overflow");
        return static_cast<std::uint64_t>(v);
    };
    PredictedDayParams out;
    for (int h = 0; h < 24; ++h) {
        out.a_micro[h] = blend(day_minus_1.a[h], day_minus_2.a[h], day_minus_7.a[h]);
        out.b_micro[h] = blend(day_minus_1.b[h], day_minus_2.b[h], day_minus_7.b[h]);
    }
    return out;
}

std::uint64_t forecast_sts(std::span<const std::uint64_t> history, const StsModel& model,
                           RandomSource* rng) {
    const std::size_t k = model.phi_milli.size();
    if (k == 0) throw std::invalid_argument("model order must be >= 1");
    if (history.size() < k) throw std::invalid_argument("insufficient history");

    TracedSpan<std::uint64_t> loads(history);
    unsigned __int128 acc = 0;
    for (std::size_t j = 0; j < k; ++j) {
        acc += static_cast<unsigned __int128>(model.phi_milli[j]) * loads[j];
        obl::trace_op(kOpMulAcc);
    }
    acc /= 1000;
    if (acc > UINT64_MAX) throw std::overflow_error("forecast overflow");
    std::int64_t forecast = static_cast<std::int64_t>(static_cast<std::uint64_t>(acc));

    if (model.sigma_milli > 0 && rng != nullptr) {
        // Box-Muller on two uniform draws; amplitude sigma (milli-Wh).
        double u1 = (rng->next_u64() >> 11) * 0x1.0p-53 + 0x1.0p-54;
        double u2 = (rng->next_u64() >> 11) * 0x1.0p-53;
        double gauss = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        std::int64_t noise =
            static_cast<std::int64_t>(gauss * static_cast<double>(model.sigma_milli) / 1000.0);
        forecast += noise;
    }
    return forecast < 0 ? 0 : static_cast<std::uint64_t>(forecast);
}

BillResult compute_bill(std::span<const std::uint64_t> readings,
                        std::span<const std::uint64_t> prices) {
    if (readings.size() != prices.size()) throw std::invalid_argument("shape mismatch");
    TracedSpan<std::uint64_t> usage(readings);
    std::uint64_t total = 0;
    std::uint64_t overflow_mask = 0;
    for (std::size_t h = 0; h < readings.size(); ++h) {
        unsigned __int128 product = static_cast<unsigned __int128>(usage[h]) * prices[h];
        obl::trace_op(kOpMulAcc);
        std::uint64_t hi = static_cast<std::uint64_t>(product >> 64);
        std::uint64_t lo = static_cast<std::uint64_t>(product);
        overflow_mask |= hi;  // any high bit means the product overflowed
        std::uint64_t next = total + lo;
        overflow_mask |= o_greater(total, next).raw();
        total = next;
    }
    return {total, overflow_mask != 0};
}

Bytes encode_outputs(const std::vector<FunctionOutput>& outputs) {
    Bytes out;
    for (const auto& o : outputs) {
        out.push_back(static_cast<std::uint8_t>(o.tag));
        put_u32(out, static_cast<std::uint32_t>(o.value.size()));
        append(out, as_view(o.value));
    }
    return out;
}

std::optional<std::vector<FunctionOutput>> decode_outputs(ByteView wire) {
    try {
        ByteReader r(wire);
        std::vector<FunctionOutput> outputs;
        while (!r.done()) {
            FunctionOutput o;
            std::uint8_t tag = r.u8();
            if (tag < 1 || tag > 5) return std::nullopt;
            o.tag = static_cast<OutputTag>(tag);
            o.value = r.take_bytes(r.u32());
            outputs.push_back(std::move(o));
        }
        return outputs;
    } catch (const std::out_of_range&) {
        return std::nullopt;
    }
}

}  // namespace secgrid
