#pragma once

// Shared test fixtures: a bare cleartext backend for circuit algebra, hash
// generators, and a simulation-backend key fixture with reveal helpers that
// go through the real threshold-decryption path.

#include <algorithm>
#include <filesystem>
#include <random>
#include <vector>

#include "provreg/boolcircuit.hpp"
#include "provreg/hashcore.hpp"
#include "provreg/mpfhe.hpp"

namespace provreg::testing {

struct ClearBit {
  bool v = false;
};

class ClearBackend {
 public:
  using Bit = ClearBit;
  explicit ClearBackend(std::uint64_t id = 7) : id_(id) {}
  Bit bit_xor(const Bit& a, const Bit& b) const { return {a.v != b.v}; }
  Bit bit_and(const Bit& a, const Bit& b) const { return {a.v && b.v}; }
  Bit bit_or(const Bit& a, const Bit& b) const { return {a.v || b.v}; }
  Bit bit_not(const Bit& a) const { return {!a.v}; }
  Bit constant(bool v) const { return {v}; }
  std::uint64_t instance_id() const { return id_; }

  EncBitVector<ClearBackend> vec(const std::vector<bool>& bits) const {
    EncBitVector<ClearBackend> out{{}, id_};
    for (bool b : bits) out.bits.push_back({b});
    return out;
  }
  EncBitVector<ClearBackend> vec(const PerceptualHash& h) const {
    EncBitVector<ClearBackend> out{{}, id_};
    for (std::size_t i = 0; i < h.size(); ++i) out.bits.push_back({h.bit(i)});
    return out;
  }
  EncUInt<ClearBackend> uint(std::uint64_t v, std::size_t width) const {
    EncUInt<ClearBackend> out{{}, id_};
    for (std::size_t i = 0; i < width; ++i) out.bits.push_back({bool((v >> i) & 1)});
    return out;
  }
  static std::uint64_t value(const EncUInt<ClearBackend>& x) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < x.width(); ++i)
      if (x.bits[i].v) v |= std::uint64_t{1} << i;
    return v;
  }

 private:
  std::uint64_t id_;
};

inline PerceptualHash random_hash(std::mt19937_64& rng, std::size_t k = 96) {
  PerceptualHash h(k);
  for (std::size_t i = 0; i < k; ++i) h.set(i, rng() & 1);
  return h;
}

/// Copy of `h` with exactly `flips` distinct bits inverted.
inline PerceptualHash flip_bits(const PerceptualHash& h, std::size_t flips,
                                std::mt19937_64& rng) {
  std::vector<std::size_t> idx(h.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  PerceptualHash out = h;
  for (std::size_t i = 0; i < flips; ++i) out.set(idx[i], !h.bit(idx[i]));
  return out;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("provreg-test-" + std::to_string(rd()) + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

struct SimFixture {
  PartySet parties;
  KeyMaterial keys;
  SimBackend backend;
  Rng rng;

  explicit SimFixture(std::uint32_t n = 2, std::uint32_t m = 2, std::uint64_t seed = 42)
      : SimFixture(setup(n, m, seed), seed) {}

  std::vector<DecryptionShare> shares_for(const Ciphertext& ct, std::size_t count) const {
    std::vector<DecryptionShare> out;
    for (std::size_t i = 0; i < count; ++i)
      out.push_back(partial_decrypt(keys.shares[i], ct));
    return out;
  }

  std::uint64_t reveal(const Ciphertext& ct) const {
    return combine_shares(shares_for(ct, keys.public_key.m), ct, keys.public_key);
  }

  std::vector<bool> reveal_bits(std::span<const SimBit> bits) {
    const Ciphertext ct = backend.seal(bits, rng);
    return combine_shares_bits(shares_for(ct, keys.public_key.m), ct, keys.public_key);
  }

  std::uint64_t reveal_uint(const EncUInt<SimBackend>& x) {
    const auto bits = reveal_bits(x.bits);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < bits.size(); ++i)
      if (bits[i]) v |= std::uint64_t{1} << i;
    return v;
  }

  bool reveal_bit(const SimBit& b) { return reveal_bits(std::span(&b, 1)).front(); }

  EncBitVector<SimBackend> load(const PerceptualHash& h) {
    return backend.load_bits(encrypt_hash(keys.public_key, h, rng));
  }
  EncUInt<SimBackend> load_uint(std::uint64_t v, std::size_t width) {
    return backend.load_uint(encrypt_threshold(keys.public_key, v, width, rng));
  }

 private:
  SimFixture(std::pair<PartySet, KeyMaterial> s, std::uint64_t seed)
      : parties(std::move(s.first)),
        keys(std::move(s.second)),
        backend(keys.public_key, keys.evaluation_key),
        rng(seed ^ 0x9e3779b97f4a7c15ull) {}
};

}  // namespace provreg::testing
