#include "secgrid/oblivious.hpp"

namespace secgrid::obl {

namespace {

thread_local TraceScope* g_active_scope = nullptr;
thread_local AccessTrace* g_active_trace = nullptr;

// MSB of (z ^ ((x ^ y) & (x ^ z))) with z = y - x is the unsigned x > y bit.
inline std::uint64_t gt_bit(std::uint64_t x, std::uint64_t y) {
    std::uint64_t z = y - x;
    return (z ^ ((x ^ y) & (x ^ z))) >> 63;
}

inline std::uint64_t nonzero_bit(std::uint64_t x) { return (x | (0 - x)) >> 63; }

}  // namespace

namespace detail {
void emit(TraceKind kind, std::uint64_t a, std::uint64_t b) {
    if (g_active_trace) g_active_trace->events.push_back({kind, a, b});
}
}  // namespace detail

Mask o_greater(std::uint64_t a, std::uint64_t b) {
    detail::emit(TraceKind::Greater, 0, 0);
    return Mask(0 - gt_bit(a, b));
}

Mask o_equal(std::uint64_t a, std::uint64_t b) {
    detail::emit(TraceKind::Equal, 0, 0);
    return Mask(0 - (1 ^ nonzero_bit(a ^ b)));
}

Mask o_or(Mask a, Mask b) {
    detail::emit(TraceKind::Or, 0, 0);
    return Mask(a.raw() | b.raw());
}

std::uint64_t o_move(Mask m, std::uint64_t on_true, std::uint64_t on_false) {
    detail::emit(TraceKind::Move, 0, 0);
    return (m.raw() & on_true) | (~m.raw() & on_false);
}

std::uint64_t o_select_index(std::uint64_t secret_index, std::span<const std::uint64_t> table,
                             Mask* out_of_range) {
    detail::emit(TraceKind::SelectScan, table.size(), 0);
    std::uint64_t acc = 0;
    std::uint64_t hit = 0;
    for (std::size_t j = 0; j < table.size(); ++j) {
        std::uint64_t eq = 0 - (1 ^ nonzero_bit(secret_index ^ j));
        acc |= eq & table[j];
        hit |= eq;
    }
    if (out_of_range) *out_of_range = Mask(~hit);
    return acc;
}

Bytes AccessTrace::serialize() const {
    Bytes out;
    out.reserve(events.size() * 17);
    for (const auto& e : events) {
        out.push_back(static_cast<std::uint8_t>(e.kind));
        put_u64(out, e.a);
        put_u64(out, e.b);
    }
    return out;
}

TraceScope::TraceScope() : parent_(g_active_scope) {
    g_active_scope = this;
    g_active_trace = &trace_;
}

TraceScope::~TraceScope() {
    g_active_scope = parent_;
    g_active_trace = parent_ ? &parent_->trace_ : nullptr;
}

AccessTrace TraceScope::take() { return std::move(trace_); }

}  // namespace secgrid::obl
