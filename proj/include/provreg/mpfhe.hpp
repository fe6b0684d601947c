#pragma once

// Multi-party key lifecycle, per-bit encryption, encrypted query evaluation
// and threshold decryption.
//
// The bundled backend is a simulation. Ciphertexts on the wire are
// threshold ElGamal encryptions (exponent encoding, order-q subgroup of a
// 62-bit safe prime) under the aggregated public key, and decryption really
// does need m Shamir shares. Gate evaluation, which a boolean FHE scheme
// would do with a bootstrapping key, is emulated: the EvaluationKey carries
// the aggregated secret so the evaluator can open ciphertexts into SimBits.
// Nothing here is secure at these parameter sizes.

#include <array>
#include <chrono>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "provreg/boolcircuit.hpp"
#include "provreg/bytes.hpp"
#include "provreg/hashcore.hpp"
#include "provreg/parallel.hpp"

namespace provreg {

using Rng = std::mt19937_64;

namespace group {
inline constexpr std::uint64_t kModulus = 4611686018427377339ull;  // 2q + 1
inline constexpr std::uint64_t kOrder = 2305843009213688669ull;    // q
inline constexpr std::uint64_t kGenerator = 4;

std::uint64_t mul(std::uint64_t a, std::uint64_t b, std::uint64_t mod);
std::uint64_t pow(std::uint64_t base, std::uint64_t exp, std::uint64_t mod);
std::uint64_t inverse(std::uint64_t a, std::uint64_t prime_mod);
}  // namespace group

struct PartyId {
  std::uint32_t index = 0;
  std::string name;
  bool operator==(const PartyId&) const = default;
};

struct PartySet {
  std::uint32_t n = 0;
  std::uint32_t m = 0;
  std::vector<PartyId> parties;
};

/// Aggregated m-of-n public key (P_shared).
struct PublicKey {
  std::uint32_t n = 0;
  std::uint32_t m = 0;
  std::uint64_t h = 0;  // g^s

  Bytes encode() const;
  static PublicKey decode(std::span<const std::uint8_t> bytes);
  Digest digest() const;
};

/// Evaluator-side key. Stand-in for a bootstrapping key; see file comment.
struct EvaluationKey {
  Digest key_digest{};
  std::uint64_t secret = 0;

  Bytes encode() const;
  static EvaluationKey decode(std::span<const std::uint8_t> bytes);
};

/// One party's Shamir share of the aggregated secret, evaluated at index+1.
struct SecretShare {
  PartyId party;
  Digest key_digest{};
  std::uint32_t n = 0;
  std::uint32_t m = 0;
  std::uint64_t value = 0;

  Bytes encode() const;
  static SecretShare decode(std::span<const std::uint8_t> bytes);
};

struct KeyMaterial {
  PublicKey public_key;
  Digest key_digest{};
  EvaluationKey evaluation_key;
  std::vector<SecretShare> shares;
};

/// Each party deals a random degree m-1 polynomial; the aggregated secret is
/// the sum of constant terms and each party's share the sum of all
/// polynomials at its point. Deterministic in `seed`.
std::pair<PartySet, KeyMaterial> setup(std::uint32_t n, std::uint32_t m,
                                       std::uint64_t seed);

struct BitCiphertext {
  std::uint64_t c1 = 0;  // g^r
  std::uint64_t c2 = 0;  // g^b * h^r
  bool operator==(const BitCiphertext&) const = default;
};

/// Per-bit ciphertexts bound to a key digest. Wire form:
/// digest (32) | u32 count | count * (u64 c1, u64 c2), little-endian.
struct Ciphertext {
  Digest key_digest{};
  std::vector<BitCiphertext> bits;

  std::size_t size() const { return bits.size(); }
  Bytes serialize() const;
  static Ciphertext deserialize(std::span<const std::uint8_t> bytes);
  Digest digest() const;
  bool operator==(const Ciphertext&) const = default;
};

using EncryptedHash = Ciphertext;

/// Hook for backend-specific ciphertext compression. Empty members mean
/// identity.
struct CiphertextCodec {
  std::function<Bytes(std::span<const std::uint8_t>)> pack;
  std::function<Bytes(std::span<const std::uint8_t>)> unpack;
};

Bytes pack_ciphertext(const Ciphertext& ct, const CiphertextCodec& codec = {});
Ciphertext unpack_ciphertext(std::span<const std::uint8_t> bytes,
                             const CiphertextCodec& codec = {});

Ciphertext encrypt_bits(const PublicKey& pk, std::span<const bool> bits, Rng& rng);
EncryptedHash encrypt_hash(const PublicKey& pk, const PerceptualHash& h, Rng& rng);
/// Little-endian encryption of t; WidthOverflow unless 0 <= t < 2^width.
Ciphertext encrypt_threshold(const PublicKey& pk, std::uint64_t t,
                             std::size_t width, Rng& rng);

/// Wire form: u32 party index | ct digest (32) | u32 count | count * u64.
struct DecryptionShare {
  std::uint32_t party = 0;
  Digest ct_digest{};
  std::vector<std::uint64_t> payload;

  Bytes serialize() const;
  static DecryptionShare deserialize(std::span<const std::uint8_t> bytes);
  bool operator==(const DecryptionShare&) const = default;
};

DecryptionShare partial_decrypt(const SecretShare& share, const Ciphertext& ct);

/// Recovers the plaintext bits from at least m distinct parties' shares.
/// Duplicate shares from one party count once.
std::vector<bool> combine_shares_bits(std::span<const DecryptionShare> shares,
                                      const Ciphertext& ct, const PublicKey& pk);
/// Same, read as a little-endian unsigned integer (width <= 64).
std::uint64_t combine_shares(std::span<const DecryptionShare> shares,
                             const Ciphertext& ct, const PublicKey& pk);
PerceptualHash decrypt_hash(std::span<const DecryptionShare> shares,
                            const EncryptedHash& ct, const PublicKey& pk);

/// In-memory encrypted bit of the simulation backend. The value is only
/// reachable through SimBackend::seal followed by threshold decryption.
class SimBit {
 public:
  SimBit() = default;

 private:
  friend class SimBackend;
  explicit SimBit(bool v) : v_(v) {}
  bool v_ = false;
};

class SimBackend {
 public:
  using Bit = SimBit;

  SimBackend(PublicKey pk, EvaluationKey ek);

  Bit bit_xor(const Bit& a, const Bit& b) const { return Bit(a.v_ != b.v_); }
  Bit bit_and(const Bit& a, const Bit& b) const { return Bit(a.v_ && b.v_); }
  Bit bit_or(const Bit& a, const Bit& b) const { return Bit(a.v_ || b.v_); }
  Bit bit_not(const Bit& a) const { return Bit(!a.v_); }
  Bit constant(bool v) const { return Bit(v); }
  std::uint64_t instance_id() const { return id_; }

  const Digest& key_digest() const { return digest_; }
  const PublicKey& public_key() const { return pk_; }

  EncBitVector<SimBackend> load_bits(const Ciphertext& ct) const;
  EncUInt<SimBackend> load_uint(const Ciphertext& ct) const;
  /// Re-encrypts evaluated bits under the public key with fresh randomness.
  Ciphertext seal(std::span<const Bit> bits, Rng& rng) const;

 private:
  std::vector<Bit> open(const Ciphertext& ct) const;

  PublicKey pk_;
  EvaluationKey ek_;
  Digest digest_{};
  std::uint64_t id_ = 0;
};

static_assert(BitBackend<SimBackend>);

enum class QueryMode { Or, Count };

std::string to_string(QueryMode mode);
QueryMode parse_query_mode(std::string_view text);

/// Gate tallies per evaluation phase.
struct PhaseGates {
  GateCounts xor_phase;
  GateCounts hd_phase;
  GateCounts decision_phase;

  GateCounts total() const {
    GateCounts t = xor_phase;
    t += hd_phase;
    t += decision_phase;
    return t;
  }
};

/// Cumulative wall-clock milliseconds: XOR array, then through Hamming
/// distance, then through the final reduction.
struct PhaseTimings {
  double xor_ms = 0;
  double hd_ms = 0;
  double full_ms = 0;
};

template <BitBackend B>
struct QueryEvaluation {
  EncUInt<B> result;
  PhaseGates gates;
  PhaseTimings timings;
};

/// Runs the match circuit of `query` against every entry, per entry in
/// parallel, and reduces with an OR tree (membership bit) or a SUM tree
/// (number of entries within the threshold).
template <BitBackend B>
QueryEvaluation<B> evaluate_query(const B& backend,
                                  std::span<const EncBitVector<B>> db,
                                  const EncBitVector<B>& query,
                                  const EncUInt<B>& threshold, QueryMode mode,
                                  unsigned workers = 0) {
  using Clock = std::chrono::steady_clock;
  using Bit = typename B::Bit;
  if (db.empty()) throw Error(ErrorCode::EmptyDatabase, "no registry entries");

  workers = resolve_workers(workers);
  std::vector<GateEvaluator<B>> evals(workers, GateEvaluator<B>(backend));
  auto tally = [&] {
    GateCounts c;
    for (const auto& ev : evals) c += ev.counts();
    return c;
  };
  auto ms_since = [](Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  };

  QueryEvaluation<B> out;
  const auto start = Clock::now();

  std::vector<EncBitVector<B>> diffs(db.size());
  parallel_for(db.size(), workers, [&](unsigned w, std::size_t i) {
    diffs[i] = xor_array(evals[w], query, db[i]);
  });
  out.timings.xor_ms = ms_since(start);
  out.gates.xor_phase = tally();

  std::vector<EncUInt<B>> distances(db.size());
  parallel_for(db.size(), workers, [&](unsigned w, std::size_t i) {
    distances[i] = popcount_tree(evals[w], diffs[i]);
  });
  out.timings.hd_ms = ms_since(start);
  const GateCounts through_hd = tally();
  out.gates.hd_phase = through_hd - out.gates.xor_phase;

  std::vector<Bit> matches(db.size());
  parallel_for(db.size(), workers, [&](unsigned w, std::size_t i) {
    matches[i] = leq_threshold(evals[w], distances[i], threshold);
  });
  GateEvaluator<B> reducer(backend);
  if (mode == QueryMode::Or) {
    out.result.backend_id = backend.instance_id();
    out.result.bits = {or_tree<B>(reducer, matches)};
  } else {
    out.result = sum_tree<B>(reducer, matches);
  }
  out.timings.full_ms = ms_since(start);
  GateCounts all = tally();
  all += reducer.counts();
  out.gates.decision_phase = all - through_hd;
  return out;
}

struct QueryOutcome {
  Ciphertext result;
  QueryMode mode = QueryMode::Or;
  PhaseGates gates;
  PhaseTimings timings;
};

/// Simulation-backend query over wire ciphertexts. All inputs must carry the
/// backend's key digest (KeyMismatch otherwise).
QueryOutcome evaluate_query(const SimBackend& backend,
                            std::span<const EncryptedHash> db,
                            const EncryptedHash& query, const Ciphertext& threshold,
                            QueryMode mode, Rng& rng, unsigned workers = 0);

}  // namespace provreg
