#pragma once

// Boolean circuits for the private match, written once against the
// BitBackend concept: XOR array, popcount adder tree, threshold comparator,
// OR / SUM reductions.

#include <array>
#include <bit>
#include <concepts>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "provreg/error.hpp"

namespace provreg {

/// A backend supplies opaque encrypted bits and the four gates over them.
/// Gates must be callable concurrently on a const backend.
template <class B>
concept BitBackend = requires(const B& b, const typename B::Bit& x, bool v) {
  typename B::Bit;
  { b.bit_xor(x, x) } -> std::same_as<typename B::Bit>;
  { b.bit_and(x, x) } -> std::same_as<typename B::Bit>;
  { b.bit_or(x, x) } -> std::same_as<typename B::Bit>;
  { b.bit_not(x) } -> std::same_as<typename B::Bit>;
  { b.constant(v) } -> std::same_as<typename B::Bit>;
  { b.instance_id() } -> std::convertible_to<std::uint64_t>;
};

struct GateCounts {
  std::uint64_t xor_gates = 0;
  std::uint64_t and_gates = 0;
  std::uint64_t or_gates = 0;
  std::uint64_t not_gates = 0;

  std::uint64_t total() const {
    return xor_gates + and_gates + or_gates + not_gates;
  }
  GateCounts& operator+=(const GateCounts& o) {
    xor_gates += o.xor_gates;
    and_gates += o.and_gates;
    or_gates += o.or_gates;
    not_gates += o.not_gates;
    return *this;
  }
  friend GateCounts operator-(GateCounts a, const GateCounts& b) {
    a.xor_gates -= b.xor_gates;
    a.and_gates -= b.and_gates;
    a.or_gates -= b.or_gates;
    a.not_gates -= b.not_gates;
    return a;
  }
  bool operator==(const GateCounts&) const = default;
};

/// Fixed-length vector of encrypted bits from one backend instance.
template <class B>
struct EncBitVector {
  std::vector<typename B::Bit> bits;
  std::uint64_t backend_id = 0;

  std::size_t size() const { return bits.size(); }
};

/// Unsigned integer as little-endian encrypted bits.
template <class B>
struct EncUInt {
  std::vector<typename B::Bit> bits;
  std::uint64_t backend_id = 0;

  std::size_t width() const { return bits.size(); }
};

inline constexpr std::size_t kMaxUIntWidth = 64;

/// Width needed to hold every value in [0, max_value].
constexpr std::size_t width_for(std::uint64_t max_value) {
  return max_value == 0 ? 1 : static_cast<std::size_t>(std::bit_width(max_value));
}

/// Thin gate-issuing handle over a backend with its own gate tally. One per
/// thread; tallies are merged by the caller.
template <BitBackend B>
class GateEvaluator {
 public:
  using Bit = typename B::Bit;

  explicit GateEvaluator(const B& backend) : backend_(&backend) {}

  Bit bxor(const Bit& a, const Bit& b) {
    ++counts_.xor_gates;
    return backend_->bit_xor(a, b);
  }
  Bit band(const Bit& a, const Bit& b) {
    ++counts_.and_gates;
    return backend_->bit_and(a, b);
  }
  Bit bor(const Bit& a, const Bit& b) {
    ++counts_.or_gates;
    return backend_->bit_or(a, b);
  }
  Bit bnot(const Bit& a) {
    ++counts_.not_gates;
    return backend_->bit_not(a);
  }
  Bit constant(bool v) const { return backend_->constant(v); }

  const B& backend() const { return *backend_; }
  std::uint64_t backend_id() const { return backend_->instance_id(); }
  const GateCounts& counts() const { return counts_; }

 private:
  const B* backend_;
  GateCounts counts_;
};

namespace detail {

template <BitBackend B>
struct Partial {
  std::vector<typename B::Bit> bits;
  std::uint64_t max_value = 0;
};

template <BitBackend B>
void check_backend(const GateEvaluator<B>& ev, std::uint64_t id) {
  if (id != ev.backend_id())
    throw Error(ErrorCode::BackendMismatch,
                "operand from backend " + std::to_string(id) +
                    ", evaluator on " + std::to_string(ev.backend_id()));
}

// Ripple-carry add of a + b (+ carry_in). Missing high bits of the shorter
// operand are treated as zero without spending gates. The output width is
// the exact width of the maximum possible sum, so the final carry-out is
// never computed.
template <BitBackend B>
Partial<B> ripple_add(GateEvaluator<B>& ev, const Partial<B>& a,
                      const Partial<B>& b,
                      std::optional<typename B::Bit> carry_in = std::nullopt) {
  using Bit = typename B::Bit;
  Partial<B> out;
  out.max_value = a.max_value + b.max_value + (carry_in ? 1 : 0);
  const std::size_t width = width_for(out.max_value);
  out.bits.reserve(width);

  std::optional<Bit> carry = std::move(carry_in);
  for (std::size_t i = 0; i < width; ++i) {
    const bool last = i + 1 == width;
    std::array<const Bit*, 3> in{};
    std::size_t present = 0;
    if (i < a.bits.size()) in[present++] = &a.bits[i];
    if (i < b.bits.size()) in[present++] = &b.bits[i];
    if (carry) in[present++] = &*carry;

    if (present == 3) {
      Bit ab = ev.bxor(*in[0], *in[1]);
      Bit sum = ev.bxor(ab, *in[2]);
      if (!last) {
        // carry = (a & b) | (c & (a ^ b))
        Bit g = ev.band(*in[0], *in[1]);
        Bit p = ev.band(*in[2], ab);
        carry = ev.bor(g, p);
      } else {
        carry.reset();
      }
      out.bits.push_back(std::move(sum));
    } else if (present == 2) {
      Bit sum = ev.bxor(*in[0], *in[1]);
      if (!last)
        carry = ev.band(*in[0], *in[1]);
      else
        carry.reset();
      out.bits.push_back(std::move(sum));
    } else if (present == 1) {
      out.bits.push_back(*in[0]);
      carry.reset();
    } else {
      out.bits.push_back(ev.constant(false));
    }
  }
  return out;
}

}  // namespace detail

/// Elementwise XOR; exactly a.size() XOR gates.
template <BitBackend B>
EncBitVector<B> xor_array(GateEvaluator<B>& ev, const EncBitVector<B>& a,
                          const EncBitVector<B>& b) {
  if (a.size() != b.size())
    throw Error(ErrorCode::LengthMismatch,
                "xor_array on " + std::to_string(a.size()) + " and " +
                    std::to_string(b.size()) + " bits");
  if (a.backend_id != b.backend_id)
    throw Error(ErrorCode::BackendMismatch, "xor_array operands differ in backend");
  detail::check_backend(ev, a.backend_id);
  EncBitVector<B> out;
  out.backend_id = a.backend_id;
  out.bits.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    out.bits.push_back(ev.bxor(a.bits[i], b.bits[i]));
  return out;
}

/// Popcount as a layered adder tree.
///
/// The first layer folds input bits three at a time through full adders
/// (the third bit rides in as carry-in), producing 2-bit counts. Every later
/// layer adds neighbouring partial sums pairwise with ripple-carry adders.
/// An unpaired element is promoted unchanged to the next layer. For 96
/// inputs this is 32 -> 16 -> 8 -> 4 -> 2 -> 1, i.e. six addition layers and
/// a 7-bit result. The result width is exactly width_for(bits.size()).
template <BitBackend B>
EncUInt<B> popcount_tree(GateEvaluator<B>& ev, std::span<const typename B::Bit> bits,
                         std::size_t* layers_out = nullptr) {
  if (bits.empty()) throw Error(ErrorCode::EmptyVector, "popcount of zero bits");

  std::vector<detail::Partial<B>> level;
  std::size_t layers = 0;
  if (bits.size() == 1) {
    level.push_back({{bits[0]}, 1});
  } else {
    level.reserve(bits.size() / 3 + 1);
    std::size_t i = 0;
    for (; i + 3 <= bits.size(); i += 3)
      level.push_back(detail::ripple_add<B>(ev, {{bits[i]}, 1}, {{bits[i + 1]}, 1},
                                            bits[i + 2]));
    if (bits.size() - i == 2)
      level.push_back(detail::ripple_add<B>(ev, {{bits[i]}, 1}, {{bits[i + 1]}, 1}));
    else if (bits.size() - i == 1)
      level.push_back({{bits[i]}, 1});
    layers = 1;
  }

  while (level.size() > 1) {
    std::vector<detail::Partial<B>> next;
    next.reserve(level.size() / 2 + 1);
    for (std::size_t i = 0; i + 1 < level.size(); i += 2)
      next.push_back(detail::ripple_add(ev, level[i], level[i + 1]));
    if (level.size() % 2 == 1) next.push_back(std::move(level.back()));
    level = std::move(next);
    ++layers;
  }
  if (layers_out) *layers_out = layers;

  EncUInt<B> out;
  out.backend_id = ev.backend_id();
  out.bits = std::move(level.front().bits);
  return out;
}

template <BitBackend B>
EncUInt<B> popcount_tree(GateEvaluator<B>& ev, const EncBitVector<B>& v,
                         std::size_t* layers_out = nullptr) {
  detail::check_backend(ev, v.backend_id);
  return popcount_tree<B>(ev, std::span<const typename B::Bit>(v.bits), layers_out);
}

/// Encrypted count <= threshold, as a borrow chain over the common width.
/// The narrower operand is zero-extended.
template <BitBackend B>
typename B::Bit leq_threshold(GateEvaluator<B>& ev, const EncUInt<B>& count,
                              const EncUInt<B>& threshold) {
  using Bit = typename B::Bit;
  const std::size_t w = std::max(count.width(), threshold.width());
  if (count.width() == 0 || threshold.width() == 0 || w > kMaxUIntWidth)
    throw Error(ErrorCode::WidthOverflow,
                "comparator widths " + std::to_string(count.width()) + " and " +
                    std::to_string(threshold.width()));
  detail::check_backend(ev, count.backend_id);
  detail::check_backend(ev, threshold.backend_id);

  auto bit_at = [&](const EncUInt<B>& x, std::size_t i) {
    return i < x.width() ? x.bits[i] : ev.constant(false);
  };
  // ok_i = "count[0..i) <= threshold[0..i)", i.e. no borrow out of
  // threshold - count so far; ok_{i+1} = MAJ(t_i, ~c_i, ok_i).
  Bit ok = ev.bor(bit_at(threshold, 0), ev.bnot(bit_at(count, 0)));
  for (std::size_t i = 1; i < w; ++i) {
    const Bit t = bit_at(threshold, i);
    const Bit c = bit_at(count, i);
    Bit ot = ev.bxor(ok, t);
    Bit not_oc = ev.bnot(ev.bxor(ok, c));
    ok = ev.bxor(ok, ev.band(ot, not_oc));
  }
  return ok;
}

/// Balanced OR reduction, depth ceil(log2(n)).
template <BitBackend B>
typename B::Bit or_tree(GateEvaluator<B>& ev, std::span<const typename B::Bit> bits,
                        std::size_t* depth_out = nullptr) {
  using Bit = typename B::Bit;
  if (bits.empty()) throw Error(ErrorCode::EmptyInput, "or_tree of zero bits");
  std::vector<Bit> level(bits.begin(), bits.end());
  std::size_t depth = 0;
  while (level.size() > 1) {
    std::vector<Bit> next;
    next.reserve(level.size() / 2 + 1);
    for (std::size_t i = 0; i + 1 < level.size(); i += 2)
      next.push_back(ev.bor(level[i], level[i + 1]));
    if (level.size() % 2 == 1) next.push_back(std::move(level.back()));
    level = std::move(next);
    ++depth;
  }
  if (depth_out) *depth_out = depth;
  return std::move(level.front());
}

/// Count of set bits among per-entry match bits; width ceil(log2(n+1)).
template <BitBackend B>
EncUInt<B> sum_tree(GateEvaluator<B>& ev, std::span<const typename B::Bit> bits) {
  if (bits.empty()) throw Error(ErrorCode::EmptyInput, "sum_tree of zero bits");
  return popcount_tree<B>(ev, bits);
}

/// 1 iff hamming(query, entry) <= threshold.
template <BitBackend B>
typename B::Bit match_circuit(GateEvaluator<B>& ev, const EncBitVector<B>& query,
                              const EncBitVector<B>& entry,
                              const EncUInt<B>& threshold) {
  return leq_threshold(ev, popcount_tree(ev, xor_array(ev, query, entry)), threshold);
}

}  // namespace provreg
