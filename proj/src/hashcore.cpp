#include "provreg/hashcore.hpp"

#include <bit>

#include "provreg/bytes.hpp"

namespace provreg {

PerceptualHash PerceptualHash::from_bits(std::initializer_list<int> bits) {
  PerceptualHash h(bits.size());
  std::size_t i = 0;
  for (int b : bits) h.set(i++, b != 0);
  return h;
}

PerceptualHash PerceptualHash::all_ones(std::size_t k) {
  PerceptualHash h(k);
  for (std::size_t i = 0; i < k; ++i) h.set(i, true);
  return h;
}

PerceptualHash PerceptualHash::complement() const {
  PerceptualHash h(k_);
  for (std::size_t i = 0; i < k_; ++i) h.set(i, !bit(i));
  return h;
}

std::size_t hamming_distance(const PerceptualHash& a, const PerceptualHash& b) {
  if (a.size() != b.size())
    throw Error(ErrorCode::LengthMismatch,
                "hashes of " + std::to_string(a.size()) + " and " +
                    std::to_string(b.size()) + " bits");
  // padding bits past k are always zero in both operands
  std::size_t d = 0;
  auto x = a.bytes(), y = b.bytes();
  for (std::size_t i = 0; i < x.size(); ++i)
    d += static_cast<std::size_t>(std::popcount(static_cast<unsigned>(x[i] ^ y[i])));
  return d;
}

std::size_t match_score(const PerceptualHash& a, const PerceptualHash& b) {
  return a.size() - hamming_distance(a, b);
}

std::vector<std::uint8_t> serialize_hash(const PerceptualHash& h) {
  auto b = h.bytes();
  return {b.begin(), b.end()};
}

PerceptualHash deserialize_hash(std::span<const std::uint8_t> bytes,
                                std::size_t k) {
  if (bytes.size() != (k + 7) / 8)
    throw Error(ErrorCode::LengthMismatch,
                std::to_string(bytes.size()) + " bytes for a " +
                    std::to_string(k) + "-bit hash");
  PerceptualHash h(k);
  h.bytes_.assign(bytes.begin(), bytes.end());
  if (k % 8 != 0) {
    const auto pad = static_cast<std::uint8_t>(0xFFu >> (k % 8));
    if (h.bytes_.back() & pad)
      throw Error(ErrorCode::FormatError, "nonzero padding bits");
  }
  return h;
}

std::string to_hex(const PerceptualHash& h) { return hex_encode(h.bytes()); }

PerceptualHash hash_from_hex(std::string_view hex, std::size_t k) {
  return deserialize_hash(hex_decode(hex), k);
}

}  // namespace provreg
