#include "provreg/mpfhe.hpp"

#include <algorithm>
#include <cstring>
#include <memory>
#include <string_view>

namespace provreg {

namespace group {

std::uint64_t mul(std::uint64_t a, std::uint64_t b, std::uint64_t mod) {
  return static_cast<std::uint64_t>(static_cast<unsigned __int128>(a) * b % mod);
}

std::uint64_t pow(std::uint64_t base, std::uint64_t exp, std::uint64_t mod) {
  std::uint64_t result = 1;
  base %= mod;
  while (exp) {
    if (exp & 1) result = mul(result, base, mod);
    base = mul(base, base, mod);
    exp >>= 1;
  }
  return result;
}

std::uint64_t inverse(std::uint64_t a, std::uint64_t prime_mod) {
  return pow(a, prime_mod - 2, prime_mod);
}

}  // namespace group

namespace {

using group::kGenerator;
using group::kModulus;
using group::kOrder;

constexpr std::uint16_t kKeyVersion = 1;

void put_magic(ByteWriter& out, std::string_view magic) {
  out.raw(magic);
  out.u16(kKeyVersion);
}

void expect_magic(ByteReader& in, std::string_view magic) {
  auto m = in.raw(4);
  if (std::memcmp(m.data(), magic.data(), 4) != 0 || in.u16() != kKeyVersion)
    throw Error(ErrorCode::FormatError, "expected " + std::string(magic) + " v1");
}

std::uint64_t random_scalar(Rng& rng) {
  std::uniform_int_distribution<std::uint64_t> dist(1, kOrder - 1);
  return dist(rng);
}

std::uint64_t add_mod(std::uint64_t a, std::uint64_t b, std::uint64_t mod) {
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(a) + b) % mod);
}

std::uint64_t sub_mod(std::uint64_t a, std::uint64_t b, std::uint64_t mod) {
  return a >= b ? a - b : mod - (b - a);
}

BitCiphertext encrypt_bit(std::uint64_t h, bool bit, Rng& rng) {
  const std::uint64_t r = random_scalar(rng);
  BitCiphertext ct;
  ct.c1 = group::pow(kGenerator, r, kModulus);
  ct.c2 = group::mul(bit ? kGenerator : 1, group::pow(h, r, kModulus), kModulus);
  return ct;
}

// g^b -> b; anything else means the mask did not cancel.
bool decode_bit(std::uint64_t gb) {
  if (gb == 1) return false;
  if (gb == kGenerator) return true;
  throw Error(ErrorCode::IntegrityError, "decryption did not yield a bit");
}

}  // namespace

Bytes PublicKey::encode() const {
  ByteWriter out;
  put_magic(out, "PHPK");
  out.u32(n);
  out.u32(m);
  out.u64(kModulus);
  out.u64(kGenerator);
  out.u64(h);
  return std::move(out).bytes();
}

PublicKey PublicKey::decode(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  expect_magic(in, "PHPK");
  PublicKey pk;
  pk.n = in.u32();
  pk.m = in.u32();
  if (in.u64() != kModulus || in.u64() != kGenerator)
    throw Error(ErrorCode::FormatError, "unsupported group parameters");
  pk.h = in.u64();
  in.expect_end();
  return pk;
}

Digest PublicKey::digest() const { return sha256(encode()); }

Bytes EvaluationKey::encode() const {
  ByteWriter out;
  put_magic(out, "PHEK");
  out.raw(key_digest);
  out.u64(secret);
  return std::move(out).bytes();
}

EvaluationKey EvaluationKey::decode(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  expect_magic(in, "PHEK");
  EvaluationKey ek;
  ek.key_digest = in.fixed<32>();
  ek.secret = in.u64();
  in.expect_end();
  return ek;
}

Bytes SecretShare::encode() const {
  ByteWriter out;
  put_magic(out, "PHSS");
  out.raw(key_digest);
  out.u32(party.index);
  out.str(party.name);
  out.u32(n);
  out.u32(m);
  out.u64(value);
  return std::move(out).bytes();
}

SecretShare SecretShare::decode(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  expect_magic(in, "PHSS");
  SecretShare s;
  s.key_digest = in.fixed<32>();
  s.party.index = in.u32();
  s.party.name = in.str();
  s.n = in.u32();
  s.m = in.u32();
  s.value = in.u64();
  in.expect_end();
  return s;
}

std::pair<PartySet, KeyMaterial> setup(std::uint32_t n, std::uint32_t m,
                                       std::uint64_t seed) {
  if (n < 2 || m < 2 || m > n)
    throw Error(ErrorCode::InvalidThreshold,
                "need 2 <= m <= n, got n=" + std::to_string(n) +
                    " m=" + std::to_string(m));
  Rng rng(seed);

  // coeffs[i][j]: coefficient j of party i's dealt polynomial
  std::vector<std::vector<std::uint64_t>> coeffs(n, std::vector<std::uint64_t>(m));
  for (auto& poly : coeffs)
    for (auto& c : poly) c = random_scalar(rng);

  std::uint64_t secret = 0;
  for (const auto& poly : coeffs) secret = add_mod(secret, poly[0], kOrder);

  PartySet parties{n, m, {}};
  KeyMaterial km;
  km.public_key = {n, m, group::pow(kGenerator, secret, kModulus)};
  km.key_digest = km.public_key.digest();
  km.evaluation_key = {km.key_digest, secret};

  for (std::uint32_t j = 0; j < n; ++j) {
    const std::uint64_t x = j + 1;
    std::uint64_t value = 0;
    for (const auto& poly : coeffs) {
      // Horner
      std::uint64_t y = 0;
      for (auto c = poly.rbegin(); c != poly.rend(); ++c)
        y = add_mod(group::mul(y, x, kOrder), *c, kOrder);
      value = add_mod(value, y, kOrder);
    }
    PartyId id{j, "party-" + std::to_string(j)};
    parties.parties.push_back(id);
    km.shares.push_back({id, km.key_digest, n, m, value});
  }
  return {std::move(parties), std::move(km)};
}

Bytes Ciphertext::serialize() const {
  ByteWriter out;
  out.raw(key_digest);
  out.u32(static_cast<std::uint32_t>(bits.size()));
  for (const auto& b : bits) {
    out.u64(b.c1);
    out.u64(b.c2);
  }
  return std::move(out).bytes();
}

Ciphertext Ciphertext::deserialize(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  Ciphertext ct;
  ct.key_digest = in.fixed<32>();
  const std::uint32_t count = in.u32();
  if (std::uint64_t(count) * 16 != in.remaining())
    throw Error(ErrorCode::FormatError, "ciphertext record count mismatch");
  ct.bits.resize(count);
  for (auto& b : ct.bits) {
    b.c1 = in.u64();
    b.c2 = in.u64();
    if (b.c1 == 0 || b.c1 >= kModulus || b.c2 == 0 || b.c2 >= kModulus)
      throw Error(ErrorCode::FormatError, "ciphertext element out of range");
  }
  return ct;
}

Digest Ciphertext::digest() const { return sha256(serialize()); }

Bytes pack_ciphertext(const Ciphertext& ct, const CiphertextCodec& codec) {
  Bytes raw = ct.serialize();
  return codec.pack ? codec.pack(raw) : raw;
}

Ciphertext unpack_ciphertext(std::span<const std::uint8_t> bytes,
                             const CiphertextCodec& codec) {
  if (codec.unpack) return Ciphertext::deserialize(codec.unpack(bytes));
  return Ciphertext::deserialize(bytes);
}

Ciphertext encrypt_bits(const PublicKey& pk, std::span<const bool> bits, Rng& rng) {
  Ciphertext ct;
  ct.key_digest = pk.digest();
  ct.bits.reserve(bits.size());
  for (bool b : bits) ct.bits.push_back(encrypt_bit(pk.h, b, rng));
  return ct;
}

EncryptedHash encrypt_hash(const PublicKey& pk, const PerceptualHash& h, Rng& rng) {
  // std::vector<bool> has no contiguous storage to span over
  std::unique_ptr<bool[]> bits(new bool[h.size()]);
  for (std::size_t i = 0; i < h.size(); ++i) bits[i] = h.bit(i);
  return encrypt_bits(pk, std::span<const bool>(bits.get(), h.size()), rng);
}

Ciphertext encrypt_threshold(const PublicKey& pk, std::uint64_t t,
                             std::size_t width, Rng& rng) {
  if (width == 0 || width > kMaxUIntWidth ||
      (width < 64 && t >= (std::uint64_t{1} << width)))
    throw Error(ErrorCode::WidthOverflow,
                std::to_string(t) + " does not fit in " + std::to_string(width) +
                    " bits");
  std::unique_ptr<bool[]> bits(new bool[width]);
  for (std::size_t i = 0; i < width; ++i) bits[i] = (t >> i) & 1u;
  return encrypt_bits(pk, std::span<const bool>(bits.get(), width), rng);
}

Bytes DecryptionShare::serialize() const {
  ByteWriter out;
  out.u32(party);
  out.raw(ct_digest);
  out.u32(static_cast<std::uint32_t>(payload.size()));
  for (auto v : payload) out.u64(v);
  return std::move(out).bytes();
}

DecryptionShare DecryptionShare::deserialize(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  DecryptionShare s;
  s.party = in.u32();
  s.ct_digest = in.fixed<32>();
  const std::uint32_t count = in.u32();
  if (std::uint64_t(count) * 8 != in.remaining())
    throw Error(ErrorCode::FormatError, "share payload count mismatch");
  s.payload.resize(count);
  for (auto& v : s.payload) v = in.u64();
  return s;
}

DecryptionShare partial_decrypt(const SecretShare& share, const Ciphertext& ct) {
  if (share.key_digest != ct.key_digest)
    throw Error(ErrorCode::KeyMismatch, "share and ciphertext use different keys");
  DecryptionShare out;
  out.party = share.party.index;
  out.ct_digest = ct.digest();
  out.payload.reserve(ct.size());
  for (const auto& b : ct.bits) out.payload.push_back(group::pow(b.c1, share.value, kModulus));
  return out;
}

std::vector<bool> combine_shares_bits(std::span<const DecryptionShare> shares,
                                      const Ciphertext& ct, const PublicKey& pk) {
  if (ct.key_digest != pk.digest())
    throw Error(ErrorCode::KeyMismatch, "ciphertext not under this public key");
  const Digest target = ct.digest();

  std::vector<const DecryptionShare*> quorum;
  for (const auto& s : shares) {
    if (s.ct_digest != target)
      throw Error(ErrorCode::BindingMismatch,
                  "share from party " + std::to_string(s.party) +
                      " is bound to another ciphertext");
    if (s.party >= pk.n || s.payload.size() != ct.size())
      throw Error(ErrorCode::BindingMismatch,
                  "malformed share from party " + std::to_string(s.party));
    const bool seen = std::any_of(quorum.begin(), quorum.end(),
                                  [&](auto* q) { return q->party == s.party; });
    if (!seen && quorum.size() < pk.m) quorum.push_back(&s);
  }
  if (quorum.size() < pk.m)
    throw Error(ErrorCode::DecryptionIncomplete,
                std::to_string(quorum.size()) + " of " + std::to_string(pk.m) +
                    " required shares");

  // Lagrange coefficients at 0 over the share points
  std::vector<std::uint64_t> lambda(quorum.size());
  for (std::size_t j = 0; j < quorum.size(); ++j) {
    const std::uint64_t xj = quorum[j]->party + 1;
    std::uint64_t num = 1, den = 1;
    for (std::size_t k = 0; k < quorum.size(); ++k) {
      if (k == j) continue;
      const std::uint64_t xk = quorum[k]->party + 1;
      num = group::mul(num, xk, kOrder);
      den = group::mul(den, sub_mod(xk, xj, kOrder), kOrder);
    }
    lambda[j] = group::mul(num, group::inverse(den, kOrder), kOrder);
  }

  std::vector<bool> bits(ct.size());
  for (std::size_t i = 0; i < ct.size(); ++i) {
    std::uint64_t mask = 1;  // h^r
    for (std::size_t j = 0; j < quorum.size(); ++j)
      mask = group::mul(mask, group::pow(quorum[j]->payload[i], lambda[j], kModulus),
                        kModulus);
    bits[i] = decode_bit(
        group::mul(ct.bits[i].c2, group::inverse(mask, kModulus), kModulus));
  }
  return bits;
}

std::uint64_t combine_shares(std::span<const DecryptionShare> shares,
                             const Ciphertext& ct, const PublicKey& pk) {
  if (ct.size() == 0 || ct.size() > 64)
    throw Error(ErrorCode::WidthOverflow,
                "cannot read " + std::to_string(ct.size()) + " bits as an integer");
  const auto bits = combine_shares_bits(shares, ct, pk);
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) v |= std::uint64_t{1} << i;
  return v;
}

PerceptualHash decrypt_hash(std::span<const DecryptionShare> shares,
                            const EncryptedHash& ct, const PublicKey& pk) {
  const auto bits = combine_shares_bits(shares, ct, pk);
  PerceptualHash h(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) h.set(i, bits[i]);
  return h;
}

SimBackend::SimBackend(PublicKey pk, EvaluationKey ek)
    : pk_(pk), ek_(ek), digest_(pk.digest()) {
  if (ek_.key_digest != digest_)
    throw Error(ErrorCode::KeyMismatch, "evaluation key belongs to another key");
  std::memcpy(&id_, digest_.data(), sizeof id_);
}

std::vector<SimBit> SimBackend::open(const Ciphertext& ct) const {
  if (ct.key_digest != digest_)
    throw Error(ErrorCode::KeyMismatch, "ciphertext under a different key");
  std::vector<SimBit> out;
  out.reserve(ct.size());
  for (const auto& b : ct.bits) {
    const std::uint64_t mask = group::pow(b.c1, ek_.secret, kModulus);
    out.push_back(SimBit(decode_bit(group::mul(b.c2, group::inverse(mask, kModulus), kModulus))));
  }
  return out;
}

EncBitVector<SimBackend> SimBackend::load_bits(const Ciphertext& ct) const {
  return {open(ct), id_};
}

EncUInt<SimBackend> SimBackend::load_uint(const Ciphertext& ct) const {
  return {open(ct), id_};
}

Ciphertext SimBackend::seal(std::span<const SimBit> bits, Rng& rng) const {
  Ciphertext ct;
  ct.key_digest = digest_;
  ct.bits.reserve(bits.size());
  for (const auto& b : bits) ct.bits.push_back(encrypt_bit(pk_.h, b.v_, rng));
  return ct;
}

std::string to_string(QueryMode mode) {
  return mode == QueryMode::Or ? "or" : "count";
}

QueryMode parse_query_mode(std::string_view text) {
  if (text == "or") return QueryMode::Or;
  if (text == "count") return QueryMode::Count;
  throw Error(ErrorCode::FormatError, "mode must be \"or\" or \"count\"");
}

QueryOutcome evaluate_query(const SimBackend& backend,
                            std::span<const EncryptedHash> db,
                            const EncryptedHash& query, const Ciphertext& threshold,
                            QueryMode mode, Rng& rng, unsigned workers) {
  if (db.empty()) throw Error(ErrorCode::EmptyDatabase, "no registry entries");
  const auto q = backend.load_bits(query);
  const auto t = backend.load_uint(threshold);
  std::vector<EncBitVector<SimBackend>> entries(db.size());
  parallel_for(db.size(), workers, [&](unsigned, std::size_t i) {
    entries[i] = backend.load_bits(db[i]);
  });

  auto eval = evaluate_query<SimBackend>(backend, entries, q, t, mode, workers);
  QueryOutcome out;
  out.result = backend.seal(eval.result.bits, rng);
  out.mode = mode;
  out.gates = eval.gates;
  out.timings = eval.timings;
  return out;
}

}  // namespace provreg
