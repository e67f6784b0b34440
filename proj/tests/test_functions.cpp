#include <doctest.h>

#include "secgrid/crypto.hpp"
#include "secgrid/functions.hpp"

using namespace secgrid;
using obl::record_trace;

namespace {

UsageWindow window_from(std::vector<std::uint64_t> readings, std::uint32_t meters,
                        std::uint32_t span) {
    UsageWindow w;
    w.meter_count = meters;
    w.span = span;
    w.readings = std::move(readings);
    return w;
}

// brute-force double-sum oracle with big integers
unsigned __int128 oracle_sum(const std::vector<std::uint64_t>& readings) {
    unsigned __int128 total = 0;
    for (auto r : readings) total += r;
    return total;
}

}  // namespace

TEST_CASE("aggregate_window: zeros, identity, brute-force oracle") {
    CHECK(aggregate_window(window_from({0, 0, 0}, 3, 1)).total == 0);
    CHECK(aggregate_window(window_from({12345}, 1, 1)).total == 12345);

    // 3 meters x 2 periods
    auto w = window_from({1, 2, 3, 4, 5, 6}, 3, 2);
    AggregateResult r = aggregate_window(w);
    CHECK_FALSE(r.overflow);
    CHECK(r.total == 21);

    Drbg rng(1, "fn");
    for (int i = 0; i < 2000; ++i) {
        std::vector<std::uint64_t> readings(rng.uniform(40));
        for (auto& x : readings) x = rng.uniform(1'000'000'000);
        AggregateResult res = aggregate_window(window_from(readings, 1, 1));
        CHECK_FALSE(res.overflow);
        CHECK(res.total == static_cast<std::uint64_t>(oracle_sum(readings)));
    }
}

TEST_CASE("aggregate_window flags u64 overflow instead of wrapping silently") {
    auto w = window_from({UINT64_MAX, 2}, 2, 1);
    AggregateResult r = aggregate_window(w);
    CHECK(r.overflow);
}

TEST_CASE("aggregation total is permutation-invariant") {
    Drbg rng(2, "fn");
    std::vector<std::uint64_t> readings(25);
    for (auto& x : readings) x = rng.next_u64() >> 8;
    std::uint64_t expected = aggregate_window(window_from(readings, 5, 5)).total;
    for (int shuffle = 0; shuffle < 50; ++shuffle) {
        for (std::size_t i = readings.size(); i > 1; --i)
            std::swap(readings[i - 1], readings[rng.uniform(i)]);
        CHECK(aggregate_window(window_from(readings, 5, 5)).total == expected);
    }
}

TEST_CASE("price_tou: peak windows, boundaries, oracle") {
    TouParams tou{100, 40, {{1020, 1260}}};  // 17:00-21:00
    validate_tou(tou);
    CHECK(price_tou(1100, tou) == 140);  // inside peak
    CHECK(price_tou(300, tou) == 100);   // off peak
    CHECK(price_tou(1020, tou) == 140);  // half-open start is peak
    CHECK(price_tou(1260, tou) == 100);  // half-open end is off-peak
    CHECK(price_tou(1259, tou) == 140);

    TouParams multi{7, 3, {{60, 120}, {600, 660}}};
    Drbg rng(3, "fn");
    for (int i = 0; i < 100'000; ++i) {
        std::uint32_t t = static_cast<std::uint32_t>(rng.uniform(1440));
        bool peak = (t >= 60 && t < 120) || (t >= 600 && t < 660);
        CHECK(price_tou(t, multi) == (peak ? 10u : 7u));
    }

    CHECK_THROWS_AS(validate_tou(TouParams{1, 1, {{100, 90}}}), std::invalid_argument);
    CHECK_THROWS_AS(validate_tou(TouParams{1, 1, {{0, 10}, {5, 20}}}), std::invalid_argument);
    CHECK_THROWS_AS(validate_tou(TouParams{1, 1, {{1400, 2000}}}), std::invalid_argument);
}

TEST_CASE("price_cpp: event days override, empty calendar degenerates to ToU") {
    TouParams base{100, 40, {{1020, 1260}}};
    TouParams special{100, 400, {{1020, 1260}}};
    CppCalendar cal;
    cal.event_days[5] = special;

    CHECK(price_cpp(4, 1100, base, cal) == 140);   // regular day
    CHECK(price_cpp(5, 1100, base, cal) == 500);   // event day
    CHECK(price_cpp(5, 300, base, cal) == 100);    // event day, off-peak

    CppCalendar empty;
    Drbg rng(4, "fn");
    for (int i = 0; i < 1000; ++i) {
        std::uint64_t day = rng.uniform(365);
        std::uint32_t t = static_cast<std::uint32_t>(rng.uniform(1440));
        CHECK(price_cpp(day, t, base, empty) == price_tou(t, base));
    }
}

TEST_CASE("price_rtp: boundaries and exhaustive oracle over [0, 2*m0]") {
    const std::uint64_t m0 = 1000, a = 80, b = 160;
    CHECK(price_rtp(0, a, b, m0) == a);
    CHECK(price_rtp(m0, a, b, m0) == b);  // usage == threshold takes the upper rate
    CHECK(price_rtp(m0 - 1, a, b, m0) == a);
    for (std::uint64_t usage = 0; usage <= 2 * m0; ++usage) {
        std::uint64_t oracle = usage < m0 ? a : b;  // naive branching reference
        CHECK(price_rtp(usage, a, b, m0) == oracle);
    }
}

TEST_CASE("rtp_predict_day: copy-forward, fixed point, linearity, random oracle") {
    Drbg rng(5, "fn");
    auto random_day = [&](std::uint64_t bound) {
        RtpDayParams d;
        for (int h = 0; h < 24; ++h) {
            d.a[h] = rng.uniform(bound);
            d.b[h] = rng.uniform(bound);
        }
        return d;
    };

    // k = (1, 0, 0) copies day t-1 (milli-weight 1000 = exactly 1)
    RtpDayParams d1 = random_day(100000), d2 = random_day(100000), d7 = random_day(100000);
    PredictedDayParams copy = rtp_predict_day(d1, d2, d7, {1000, 0, 0});
    for (int h = 0; h < 24; ++h) {
        CHECK(copy.a_micro[h] == d1.a[h] * 1000);  // micro-currency scale
        CHECK(copy.b_micro[h] == d1.b[h] * 1000);
    }

    // constant history with weights summing to 1 is a fixed point
    RtpDayParams c;
    c.a.fill(777);
    c.b.fill(888);
    PredictedDayParams fixed = rtp_predict_day(c, c, c, {500, 300, 200});
    for (int h = 0; h < 24; ++h) {
        CHECK(fixed.a_micro[h] == 777 * 1000);
        CHECK(fixed.b_micro[h] == 888 * 1000);
    }

    // random histories against a direct recomputation, exact integers
    for (int trial = 0; trial < 100'000 / 24; ++trial) {
        RtpDayParams x1 = random_day(1'000'000), x2 = random_day(1'000'000),
                     x7 = random_day(1'000'000);
        RtpPredictCoefficients k{500, 300, 200};
        PredictedDayParams got = rtp_predict_day(x1, x2, x7, k);
        for (int h = 0; h < 24; ++h) {
            std::uint64_t ea = 500 * x1.a[h] + 300 * x2.a[h] + 200 * x7.a[h];
            std::uint64_t eb = 500 * x1.b[h] + 300 * x2.b[h] + 200 * x7.b[h];
            CHECK(got.a_micro[h] == ea);
            CHECK(got.b_micro[h] == eb);
        }
    }

    // exact linearity: predict(alpha * history) == alpha * predict(history)
    for (int trial = 0; trial < 200; ++trial) {
        RtpDayParams x1 = random_day(10000), x2 = random_day(10000), x7 = random_day(10000);
        std::uint64_t alpha = 1 + rng.uniform(50);
        RtpPredictCoefficients k{500, 300, 200};
        PredictedDayParams base = rtp_predict_day(x1, x2, x7, k);
        RtpDayParams s1 = x1, s2 = x2, s7 = x7;
        for (int h = 0; h < 24; ++h) {
            s1.a[h] *= alpha; s1.b[h] *= alpha;
            s2.a[h] *= alpha; s2.b[h] *= alpha;
            s7.a[h] *= alpha; s7.b[h] *= alpha;
        }
        PredictedDayParams scaled = rtp_predict_day(s1, s2, s7, k);
        for (int h = 0; h < 24; ++h) {
            CHECK(scaled.a_micro[h] == base.a_micro[h] * alpha);
            CHECK(scaled.b_micro[h] == base.b_micro[h] * alpha);
        }
    }
}

TEST_CASE("forecast_sts: persistence, hand oracle, fixed point, errors") {
    // k=1, phi=1, sigma=0: forecast is the last value
    StsModel persistence{{1000}, 0};
    std::vector<std::uint64_t> h1 = {4242};
    CHECK(forecast_sts(h1, persistence) == 4242);

    // k=2, phi=(0.5, 0.5), history (100, 200) -> 150
    StsModel half{{500, 500}, 0};
    std::vector<std::uint64_t> h2 = {100, 200};
    CHECK(forecast_sts(h2, half) == 150);

    // constant history, weights summing to 1 -> same constant
    StsModel three{{500, 300, 200}, 0};
    std::vector<std::uint64_t> hc = {999, 999, 999};
    CHECK(forecast_sts(hc, three) == 999);

    // random histories against direct recomputation
    Drbg rng(6, "fn");
    for (int i = 0; i < 100'000; ++i) {
        std::size_t k = 1 + rng.uniform(6);
        StsModel model;
        for (std::size_t j = 0; j < k; ++j) model.phi_milli.push_back(rng.uniform(2000));
        std::vector<std::uint64_t> history(k + rng.uniform(3));
        for (auto& x : history) x = rng.uniform(10'000'000);
        unsigned __int128 acc = 0;
        for (std::size_t j = 0; j < k; ++j)
            acc += static_cast<unsigned __int128>(model.phi_milli[j]) * history[j];
        CHECK(forecast_sts(history, model) == static_cast<std::uint64_t>(acc / 1000));
    }

    // insufficient history and zero order
    std::vector<std::uint64_t> short_history = {1};
    CHECK_THROWS_AS(forecast_sts(short_history, half), std::invalid_argument);
    CHECK_THROWS_AS(forecast_sts(h2, StsModel{{}, 0}), std::invalid_argument);

    // seeded noise is deterministic per rng stream and zero-clamped
    StsModel noisy{{1000}, 500'000};
    Drbg n1(7, "noise"), n2(7, "noise");
    std::vector<std::uint64_t> small = {10};
    CHECK(forecast_sts(small, noisy, &n1) == forecast_sts(small, noisy, &n2));
}

TEST_CASE("compute_bill: zero usage, unit check, random oracle, overflow") {
    std::vector<std::uint64_t> zero(24, 0), prices(24, 5);
    CHECK(compute_bill(zero, prices).amount == 0);

    std::vector<std::uint64_t> one_hour = {1000};
    std::vector<std::uint64_t> one_price = {5};
    CHECK(compute_bill(one_hour, one_price).amount == 5000);

    Drbg rng(8, "fn");
    for (int i = 0; i < 5000; ++i) {
        std::vector<std::uint64_t> r(24), p(24);
        for (auto& x : r) x = rng.uniform(1'000'000);
        for (auto& x : p) x = rng.uniform(1000);
        unsigned __int128 oracle = 0;
        for (int h = 0; h < 24; ++h) oracle += static_cast<unsigned __int128>(r[h]) * p[h];
        BillResult bill = compute_bill(r, p);
        CHECK_FALSE(bill.overflow);
        CHECK(bill.amount == static_cast<std::uint64_t>(oracle));
    }

    std::vector<std::uint64_t> big = {UINT64_MAX};
    std::vector<std::uint64_t> two = {2};
    CHECK(compute_bill(big, two).overflow);
    CHECK_THROWS_AS(compute_bill(one_hour, prices), std::invalid_argument);
}

TEST_CASE("obliviousness: traces are input-invariant at fixed shape") {
    Drbg rng(9, "fn");

    auto rtp_trace = [&](std::uint64_t usage) {
        return record_trace([&] { price_rtp(usage, 80, 160, 1000); }).serialize();
    };
    Bytes rtp_ref = rtp_trace(0);
    for (int i = 0; i < 100; ++i) CHECK(rtp_trace(rng.uniform(2000)) == rtp_ref);

    auto agg_trace = [&](const std::vector<std::uint64_t>& readings) {
        return record_trace([&] { aggregate_window(window_from(readings, 4, 4)); }).serialize();
    };
    std::vector<std::uint64_t> shape(16);
    for (auto& x : shape) x = rng.uniform(1'000'000);
    Bytes agg_ref = agg_trace(shape);
    for (int i = 0; i < 100; ++i) {
        for (auto& x : shape) x = rng.uniform(1'000'000);
        CHECK(agg_trace(shape) == agg_ref);
    }

    StsModel model{{500, 300, 200}, 0};
    std::vector<std::uint64_t> history(5);
    auto sts_trace = [&] {
        return record_trace([&] { forecast_sts(history, model); }).serialize();
    };
    for (auto& x : history) x = rng.uniform(1'000'000);
    Bytes sts_ref = sts_trace();
    for (int i = 0; i < 100; ++i) {
        for (auto& x : history) x = rng.uniform(1'000'000);
        CHECK(sts_trace() == sts_ref);
    }

    std::vector<std::uint64_t> r(24), p(24, 7);
    auto bill_trace = [&] {
        return record_trace([&] { compute_bill(r, p); }).serialize();
    };
    for (auto& x : r) x = rng.uniform(1'000'000);
    Bytes bill_ref = bill_trace();
    for (int i = 0; i < 100; ++i) {
        for (auto& x : r) x = rng.uniform(1'000'000);
        CHECK(bill_trace() == bill_ref);
    }
}

TEST_CASE("function outputs TLV round trip") {
    std::vector<FunctionOutput> outputs;
    outputs.push_back({OutputTag::Agg, to_bytes("12345678totalxyz")});
    outputs.push_back({OutputTag::Alarm, Bytes{1, 0, 0, 0, 0, 0, 0, 0, 3}});
    outputs.push_back({OutputTag::Bill, {}});
    Bytes wire = encode_outputs(outputs);
    auto back = decode_outputs(as_view(wire));
    REQUIRE(back.has_value());
    CHECK(*back == outputs);

    // bad tag and truncation rejected
    Bytes bad = wire;
    bad[0] = 99;
    CHECK_FALSE(decode_outputs(as_view(bad)).has_value());
    wire.pop_back();
    CHECK_FALSE(decode_outputs(as_view(wire)).has_value());
}
