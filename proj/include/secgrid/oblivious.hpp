#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "secgrid/bytes.hpp"

namespace secgrid::obl {

// All-ones or all-zeros word. Constructible only through the oblivious
// comparisons, so every mask consumed by o_move has a branchless origin.
class Mask {
public:
    std::uint64_t raw() const { return v_; }
    bool is_set() const { return v_ != 0; }  // public reveal point

    friend Mask o_greater(std::uint64_t a, std::uint64_t b);
    friend Mask o_equal(std::uint64_t a, std::uint64_t b);
    friend Mask o_or(Mask a, Mask b);
    friend std::uint64_t o_select_index(std::uint64_t, std::span<const std::uint64_t>, Mask*);

private:
    explicit Mask(std::uint64_t v) : v_(v) {}
    std::uint64_t v_;
};

// a > b (unsigned, strict), arithmetic/bitwise only.
Mask o_greater(std::uint64_t a, std::uint64_t b);
Mask o_equal(std::uint64_t a, std::uint64_t b);
Mask o_or(Mask a, Mask b);

// (m & on_true) | (~m & on_false)
std::uint64_t o_move(Mask m, std::uint64_t on_true, std::uint64_t on_false);

// Linear-scan select: touches every element exactly once regardless of the
// secret index. Out-of-range yields 0 and sets *out_of_range when provided;
// the scan itself never depends on the index value.
std::uint64_t o_select_index(std::uint64_t secret_index, std::span<const std::uint64_t> table,
                             Mask* out_of_range = nullptr);

// --- access-trace instrumentation ------------------------------------------

enum class TraceKind : std::uint8_t {
    Greater = 1,
    Equal = 2,
    Or = 3,
    Move = 4,
    SelectScan = 5,
    Load = 6,
    Store = 7,
    Op = 8,
};

struct TraceEvent {
    TraceKind kind;
    std::uint64_t a;  // shape/index operand; never a secret value
    std::uint64_t b;

    bool operator==(const TraceEvent&) const = default;
};

struct AccessTrace {
    std::vector<TraceEvent> events;

    bool operator==(const AccessTrace&) const = default;
    Bytes serialize() const;  // byte-identical iff traces identical
};

// Per-thread recorder; primitives emit into the innermost active scope.
class TraceScope {
public:
    TraceScope();
    ~TraceScope();
    TraceScope(const TraceScope&) = delete;
    TraceScope& operator=(const TraceScope&) = delete;

    AccessTrace take();

private:
    AccessTrace trace_;
    TraceScope* parent_;
};

namespace detail {
void emit(TraceKind kind, std::uint64_t a, std::uint64_t b);
}

// Labeled fixed operation marker for instrumented function bodies.
inline void trace_op(std::uint64_t label, std::uint64_t shape = 0) {
    detail::emit(TraceKind::Op, label, shape);
}

template <typename F>
AccessTrace record_trace(F&& f) {
    TraceScope scope;
    f();
    return scope.take();
}

// Read-only view over secret data that reports every index it touches.
template <typename T>
class TracedSpan {
public:
    explicit TracedSpan(std::span<const T> data) : data_(data) {}

    std::size_t size() const { return data_.size(); }

    const T& operator[](std::size_t i) const {
        detail::emit(TraceKind::Load, i, 0);
        return data_[i];
    }

private:
    std::span<const T> data_;
};

}  // namespace secgrid::obl
