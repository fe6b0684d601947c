#include "doctest.h"

#include <random>
#include <set>

#include "provreg/mpfhe.hpp"
#include "support.hpp"

using namespace provreg;
using provreg::testing::flip_bits;
using provreg::testing::random_hash;
using provreg::testing::SimFixture;

namespace {

ErrorCode error_code(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::IoError;
}

std::vector<DecryptionShare> shares_from(const KeyMaterial& keys, const Ciphertext& ct,
                                         std::initializer_list<std::uint32_t> parties) {
  std::vector<DecryptionShare> out;
  for (auto p : parties) out.push_back(partial_decrypt(keys.shares[p], ct));
  return out;
}

std::uint64_t plaintext_count(const std::vector<PerceptualHash>& db, const PerceptualHash& q,
                              std::size_t t) {
  std::uint64_t n = 0;
  for (const auto& h : db) n += hamming_distance(h, q) <= t;
  return n;
}

}  // namespace

TEST_CASE("group arithmetic sanity") {
  using namespace group;
  CHECK(kModulus == 2 * kOrder + 1);
  CHECK(pow(kGenerator, kOrder, kModulus) == 1);
  CHECK(pow(kGenerator, 1, kModulus) == kGenerator);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const std::uint64_t a = 1 + rng() % (kOrder - 1);
    CHECK(mul(a, inverse(a, kOrder), kOrder) == 1);
    const std::uint64_t x = rng() % kOrder, y = rng() % kOrder;
    CHECK(mul(pow(kGenerator, x, kModulus), pow(kGenerator, y, kModulus), kModulus) ==
          pow(kGenerator, (x + y) % kOrder, kModulus));
  }
}

TEST_CASE("setup produces distinct shares and is deterministic in the seed") {
  const auto [parties, keys] = setup(2, 2, 99);
  CHECK(parties.n == 2);
  CHECK(parties.m == 2);
  REQUIRE(parties.parties.size() == 2);
  CHECK(parties.parties[1].index == 1);
  REQUIRE(keys.shares.size() == 2);
  CHECK(keys.shares[0].value != keys.shares[1].value);
  CHECK(keys.key_digest == keys.public_key.digest());
  CHECK(keys.evaluation_key.key_digest == keys.key_digest);
  for (const auto& s : keys.shares) CHECK(s.key_digest == keys.key_digest);

  const auto again = setup(2, 2, 99).second;
  CHECK(again.public_key.h == keys.public_key.h);
  CHECK(again.shares[0].value == keys.shares[0].value);
  CHECK(setup(2, 2, 100).second.key_digest != keys.key_digest);

  CHECK(error_code([] { setup(2, 3, 1); }) == ErrorCode::InvalidThreshold);
  CHECK(error_code([] { setup(3, 1, 1); }) == ErrorCode::InvalidThreshold);
  CHECK(error_code([] { setup(1, 1, 1); }) == ErrorCode::InvalidThreshold);
}

TEST_CASE("n = 2, m = 2 needs both shares") {
  const auto keys = setup(2, 2, 5).second;
  Rng rng(5);
  const auto h = random_hash(rng);
  const auto ct = encrypt_hash(keys.public_key, h, rng);
  CHECK(ct.size() == 96);
  CHECK(decrypt_hash(shares_from(keys, ct, {0, 1}), ct, keys.public_key) == h);
  CHECK(decrypt_hash(shares_from(keys, ct, {1, 0}), ct, keys.public_key) == h);
  CHECK(error_code([&] { decrypt_hash(shares_from(keys, ct, {0}), ct, keys.public_key); }) ==
        ErrorCode::DecryptionIncomplete);
  CHECK(error_code([&] { decrypt_hash(shares_from(keys, ct, {1, 1}), ct, keys.public_key); }) ==
        ErrorCode::DecryptionIncomplete);
}

TEST_CASE("every share subset decrypts iff it reaches the quorum") {
  for (auto [n, m] : {std::pair{3u, 2u}, {4u, 3u}, {5u, 5u}, {5u, 2u}}) {
    const auto keys = setup(n, m, 7 + n * 10 + m).second;
    Rng rng(n * m);
    const auto h = random_hash(rng);
    const auto ct = encrypt_hash(keys.public_key, h, rng);
    std::vector<DecryptionShare> all;
    for (std::uint32_t p = 0; p < n; ++p) all.push_back(partial_decrypt(keys.shares[p], ct));
    for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
      std::vector<DecryptionShare> subset;
      for (std::uint32_t p = 0; p < n; ++p)
        if (mask & (1u << p)) subset.push_back(all[p]);
      if (subset.size() >= m)
        CHECK(decrypt_hash(subset, ct, keys.public_key) == h);
      else
        CHECK(error_code([&] { decrypt_hash(subset, ct, keys.public_key); }) ==
              ErrorCode::DecryptionIncomplete);
    }
  }
}

TEST_CASE("encrypt and decrypt round trips") {
  SimFixture fx;
  const auto zero = encrypt_hash(fx.keys.public_key, PerceptualHash(96), fx.rng);
  CHECK(decrypt_hash(fx.shares_for(zero, 2), zero, fx.keys.public_key) == PerceptualHash(96));

  for (int i = 0; i < 50; ++i) {
    const auto h = random_hash(fx.rng);
    const auto ct = encrypt_hash(fx.keys.public_key, h, fx.rng);
    CHECK(decrypt_hash(fx.shares_for(ct, 2), ct, fx.keys.public_key) == h);
  }

  CHECK(fx.reveal(encrypt_threshold(fx.keys.public_key, 8, 7, fx.rng)) == 8);
  CHECK(fx.reveal(encrypt_threshold(fx.keys.public_key, 0, 7, fx.rng)) == 0);
  for (int i = 0; i < 50; ++i) {
    const std::uint64_t t = fx.rng() % 128;
    CHECK(fx.reveal(encrypt_threshold(fx.keys.public_key, t, 7, fx.rng)) == t);
  }
  CHECK(error_code([&] { encrypt_threshold(fx.keys.public_key, 128, 7, fx.rng); }) ==
        ErrorCode::WidthOverflow);
  CHECK(error_code([&] { encrypt_threshold(fx.keys.public_key, 1, 0, fx.rng); }) ==
        ErrorCode::WidthOverflow);

  // fresh randomness per encryption
  const auto h = random_hash(fx.rng);
  CHECK_FALSE(encrypt_hash(fx.keys.public_key, h, fx.rng) ==
              encrypt_hash(fx.keys.public_key, h, fx.rng));
}

TEST_CASE("decryption shares are bound to one ciphertext and one key") {
  SimFixture fx;
  const auto a = encrypt_hash(fx.keys.public_key, random_hash(fx.rng), fx.rng);
  const auto b = encrypt_hash(fx.keys.public_key, random_hash(fx.rng), fx.rng);
  auto mixed = fx.shares_for(a, 1);
  mixed.push_back(partial_decrypt(fx.keys.shares[1], b));
  CHECK(error_code([&] { combine_shares_bits(mixed, a, fx.keys.public_key); }) ==
        ErrorCode::BindingMismatch);

  const auto other = setup(2, 2, 777).second;
  CHECK(error_code([&] { partial_decrypt(other.shares[0], a); }) == ErrorCode::KeyMismatch);
  CHECK(error_code([&] { combine_shares_bits(fx.shares_for(a, 2), a, other.public_key); }) ==
        ErrorCode::KeyMismatch);

  // duplicates from one party count once
  auto dup = fx.shares_for(a, 2);
  dup.push_back(dup[0]);
  CHECK(combine_shares_bits(dup, a, fx.keys.public_key).size() == 96);
}

TEST_CASE("wire formats round-trip") {
  SimFixture fx(3, 2, 8);
  const auto ct = encrypt_hash(fx.keys.public_key, random_hash(fx.rng), fx.rng);
  const Bytes raw = ct.serialize();
  CHECK(raw.size() == 32 + 4 + 96 * 16);
  CHECK(std::equal(fx.keys.key_digest.begin(), fx.keys.key_digest.end(), raw.begin()));
  CHECK(Ciphertext::deserialize(raw) == ct);
  CHECK(unpack_ciphertext(pack_ciphertext(ct)) == ct);
  CHECK(pack_ciphertext(ct) == raw);

  CiphertextCodec reversing{
      [](std::span<const std::uint8_t> b) { return Bytes(b.rbegin(), b.rend()); },
      [](std::span<const std::uint8_t> b) { return Bytes(b.rbegin(), b.rend()); }};
  CHECK(unpack_ciphertext(pack_ciphertext(ct, reversing), reversing) == ct);

  Bytes truncated = raw;
  truncated.pop_back();
  CHECK(error_code([&] { Ciphertext::deserialize(truncated); }) == ErrorCode::FormatError);

  const auto share = partial_decrypt(fx.keys.shares[2], ct);
  const Bytes sraw = share.serialize();
  CHECK(sraw.size() == 4 + 32 + 4 + 96 * 8);
  CHECK(sraw[0] == 2);
  CHECK(DecryptionShare::deserialize(sraw) == share);

  const auto pk = PublicKey::decode(fx.keys.public_key.encode());
  CHECK(pk.digest() == fx.keys.key_digest);
  const auto ek = EvaluationKey::decode(fx.keys.evaluation_key.encode());
  CHECK(ek.secret == fx.keys.evaluation_key.secret);
  for (const auto& s : fx.keys.shares) {
    const auto back = SecretShare::decode(s.encode());
    CHECK(back.value == s.value);
    CHECK(back.party == s.party);
    CHECK(back.key_digest == s.key_digest);
  }
  CHECK(error_code([&] { SecretShare::decode(fx.keys.public_key.encode()); }) ==
        ErrorCode::FormatError);
}

TEST_CASE("evaluate_query matches the plaintext scan") {
  SimFixture fx;
  const auto& pk = fx.keys.public_key;
  std::vector<PerceptualHash> plain;
  std::vector<EncryptedHash> db;
  const auto q = random_hash(fx.rng);
  for (int i = 0; i < 1000; ++i) {
    plain.push_back(random_hash(fx.rng));
    db.push_back(encrypt_hash(pk, plain.back(), fx.rng));
  }
  const auto eq = encrypt_hash(pk, q, fx.rng);
  const auto t8 = encrypt_threshold(pk, 8, 7, fx.rng);

  auto run = [&](const std::vector<EncryptedHash>& entries, const EncryptedHash& query,
                 const Ciphertext& t, QueryMode mode, unsigned workers = 0) {
    const auto out = evaluate_query(fx.backend, entries, query, t, mode, fx.rng, workers);
    return fx.reveal(out.result);
  };

  CHECK(run(db, eq, t8, QueryMode::Or) == 0);
  CHECK(run(db, eq, t8, QueryMode::Count) == plaintext_count(plain, q, 8));

  // plant three close entries
  for (int d : {0, 5, 8}) {
    plain.push_back(flip_bits(q, d, fx.rng));
    db.push_back(encrypt_hash(pk, plain.back(), fx.rng));
  }
  plain.push_back(flip_bits(q, 9, fx.rng));
  db.push_back(encrypt_hash(pk, plain.back(), fx.rng));
  CHECK(run(db, eq, t8, QueryMode::Or) == 1);
  CHECK(run(db, eq, t8, QueryMode::Count) == 3);
  CHECK(plaintext_count(plain, q, 8) == 3);

  for (std::uint64_t t : {0u, 9u, 30u, 40u, 96u}) {
    const auto et = encrypt_threshold(pk, t, 7, fx.rng);
    const auto count = run(db, eq, et, QueryMode::Count);
    CHECK(count == plaintext_count(plain, q, t));
    CHECK(run(db, eq, et, QueryMode::Or) == (count > 0));
  }

  std::vector<EncryptedHash> complements(20);
  for (auto& c : complements) c = encrypt_hash(pk, q.complement(), fx.rng);
  CHECK(run(complements, eq, t8, QueryMode::Or) == 0);
  complements.push_back(eq);
  CHECK(run(complements, eq, t8, QueryMode::Or) == 1);
}

TEST_CASE("evaluate_query is independent of the worker count") {
  SimFixture fx;
  const auto& pk = fx.keys.public_key;
  std::vector<PerceptualHash> plain;
  std::vector<EncryptedHash> db;
  const auto q = random_hash(fx.rng);
  for (int i = 0; i < 200; ++i) {
    plain.push_back(i % 4 ? random_hash(fx.rng) : flip_bits(q, fx.rng() % 16, fx.rng));
    db.push_back(encrypt_hash(pk, plain.back(), fx.rng));
  }
  const auto eq = encrypt_hash(pk, q, fx.rng);
  const auto t = encrypt_threshold(pk, 10, 7, fx.rng);
  std::optional<PhaseGates> first;
  for (unsigned workers : {1u, 2u, 3u, 8u}) {
    const auto out = evaluate_query(fx.backend, db, eq, t, QueryMode::Count, fx.rng, workers);
    CHECK(fx.reveal(out.result) == plaintext_count(plain, q, 10));
    CHECK(out.gates.xor_phase.xor_gates == 200 * 96);
    CHECK(out.gates.xor_phase.total() == 200 * 96);
    if (!first) first = out.gates;
    CHECK(out.gates.total() == first->total());
    CHECK(out.gates.hd_phase == first->hd_phase);
    CHECK(out.timings.xor_ms <= out.timings.hd_ms);
    CHECK(out.timings.hd_ms <= out.timings.full_ms);
  }
}

TEST_CASE("evaluate_query errors") {
  SimFixture fx;
  const auto& pk = fx.keys.public_key;
  const auto q = encrypt_hash(pk, random_hash(fx.rng), fx.rng);
  const auto t = encrypt_threshold(pk, 8, 7, fx.rng);
  const std::vector<EncryptedHash> empty;
  CHECK(error_code([&] { evaluate_query(fx.backend, empty, q, t, QueryMode::Or, fx.rng); }) ==
        ErrorCode::EmptyDatabase);

  const auto other = setup(2, 2, 4242).second;
  const std::vector<EncryptedHash> foreign = {
      encrypt_hash(other.public_key, random_hash(fx.rng), fx.rng)};
  CHECK(error_code([&] { evaluate_query(fx.backend, foreign, q, t, QueryMode::Or, fx.rng); }) ==
        ErrorCode::KeyMismatch);
  CHECK(error_code([&] { SimBackend(pk, other.evaluation_key); }) == ErrorCode::KeyMismatch);

  CHECK(parse_query_mode("or") == QueryMode::Or);
  CHECK(parse_query_mode("count") == QueryMode::Count);
  CHECK(to_string(QueryMode::Count) == "count");
  CHECK_THROWS_AS(parse_query_mode("xor"), Error);
}
