#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "provreg/registry.hpp"
#include "support.hpp"

using namespace provreg;
using provreg::testing::random_hash;
using provreg::testing::SimFixture;
using provreg::testing::TempDir;

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

struct StoreFixture : SimFixture {
  TempDir dir;
  std::string path = dir.file("registry.log");
  ProducerKeypair acme = ProducerKeypair::from_seed("acme", "Acme Images", 1);
  ProducerKeypair zeta = ProducerKeypair::from_seed("zeta", "Zeta Studio", 2);

  RegistryEntry entry(const ProducerKeypair& kp, std::uint64_t ts = 1700000000) {
    return make_entry(kp, encrypt_hash(keys.public_key, random_hash(rng), rng), ts, rng,
                      {{"model", "dinohash"}});
  }
};

void flip_byte(const std::string& path, std::uint64_t offset) {
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  f.seekg(static_cast<std::streamoff>(offset));
  char c;
  f.get(c);
  f.seekp(static_cast<std::streamoff>(offset));
  f.put(static_cast<char>(c ^ 0x01));
}

}  // namespace

TEST_CASE("producer keys are deterministic and signatures bind every field") {
  const auto a = ProducerKeypair::from_seed("p", "P", 5);
  CHECK(a.identity == ProducerKeypair::from_seed("p", "P", 5).identity);
  CHECK(a.identity.verification_key != ProducerKeypair::from_seed("p", "P", 6).identity.verification_key);

  StoreFixture fx;
  const auto e = fx.entry(fx.acme);
  CHECK(e.signature.size() == 64);
  CHECK(verify_signature(fx.acme.identity, e));
  CHECK_FALSE(verify_signature(fx.zeta.identity, e));

  auto ts = e;
  ts.created_at += 1;
  CHECK_FALSE(verify_signature(fx.acme.identity, ts));
  auto ct = e;
  ct.encrypted_hash.bits[17].c2 ^= 1;
  CHECK_FALSE(verify_signature(fx.acme.identity, ct));
  // metadata and id are outside the signed message
  auto meta = e;
  meta.metadata["content"] = "image/png";
  CHECK(verify_signature(fx.acme.identity, meta));

  const Bytes msg = signed_message(e.encrypted_hash, "acme", 1700000000);
  CHECK(msg.size() == 32 + 4 + e.encrypted_hash.serialize().size() + 4 + 4 + 8);
  CHECK(std::equal(fx.keys.key_digest.begin(), fx.keys.key_digest.end(), msg.begin()));
}

TEST_CASE("entry encodings round-trip") {
  StoreFixture fx;
  const auto e = fx.entry(fx.acme);
  CHECK(decode_entry(encode_entry(e)) == e);
  const auto j = entry_to_json(e);
  CHECK(j.at("producer") == "acme");
  CHECK(j.at("entry_id").get<std::string>().size() == 32);
  CHECK(entry_from_json(j) == e);
  CHECK(entry_from_json(nlohmann::json::parse(j.dump())) == e);
  CHECK(entry_id_from_hex(entry_id_hex(e.id)) == e.id);
  CHECK(error_code([] { entry_id_from_hex("abcd"); }) == ErrorCode::FormatError);
  CHECK(error_code([] { entry_from_json({{"producer", "x"}}); }) == ErrorCode::FormatError);
}

TEST_CASE("insert_entry accepts valid entries and rejects bad ones") {
  StoreFixture fx;
  RegistryStore store(fx.path, fx.keys.key_digest);
  CHECK(store.entry_count() == 0);
  CHECK(store.scan_for_query().empty());
  store.register_producer(fx.acme.identity);
  store.register_producer(fx.acme.identity);  // idempotent
  CHECK(store.producer("acme") == fx.acme.identity);
  CHECK_FALSE(store.producer("nobody"));
  auto impostor = fx.zeta.identity;
  impostor.id = "acme";
  CHECK(error_code([&] { store.register_producer(impostor); }) == ErrorCode::DuplicateId);

  const auto e = fx.entry(fx.acme);
  CHECK(store.insert_entry(e) == e.id);
  CHECK(store.entry_count() == 1);
  CHECK(error_code([&] { store.insert_entry(e); }) == ErrorCode::DuplicateId);

  auto tampered = fx.entry(fx.acme);
  tampered.encrypted_hash.bits[0].c1 ^= 0x40;
  CHECK(error_code([&] { store.insert_entry(tampered); }) == ErrorCode::BadSignature);

  CHECK(error_code([&] { store.insert_entry(fx.entry(fx.zeta)); }) == ErrorCode::BadSignature);

  // previous key epoch: properly signed, but under another aggregated key
  const auto old_keys = setup(2, 2, 1234).second;
  const auto stale = make_entry(
      fx.acme, encrypt_hash(old_keys.public_key, random_hash(fx.rng), fx.rng), 1, fx.rng);
  CHECK(verify_signature(fx.acme.identity, stale));
  CHECK(error_code([&] { store.insert_entry(stale); }) == ErrorCode::KeyMismatch);

  CHECK(store.entry_count() == 1);
}

TEST_CASE("scan_for_query keeps insertion order and filters by producer") {
  StoreFixture fx;
  RegistryStore store(fx.path, fx.keys.key_digest);
  store.register_producer(fx.acme.identity);
  store.register_producer(fx.zeta.identity);
  std::vector<EncryptedHash> all, acme_only;
  for (int i = 0; i < 7; ++i) {
    const auto e = fx.entry(i % 2 ? fx.acme : fx.zeta);
    store.insert_entry(e);
    all.push_back(e.encrypted_hash);
    if (i % 2) acme_only.push_back(e.encrypted_hash);
  }
  CHECK(acme_only.size() == 3);
  CHECK(store.scan_for_query() == all);
  CHECK(store.scan_for_query("acme") == acme_only);
  CHECK(store.scan_for_query("nobody").empty());
}

TEST_CASE("verify_entry re-reads the record from disk") {
  StoreFixture fx;
  RegistryStore store(fx.path, fx.keys.key_digest);
  store.register_producer(fx.acme.identity);
  const auto a = fx.entry(fx.acme, 111);
  const auto b = fx.entry(fx.acme, 222);
  store.insert_entry(a);
  store.insert_entry(b);

  const auto report = store.verify_entry(b.id);
  CHECK(report.ok());
  CHECK(report.producer == "acme");
  CHECK(report.created_at == 222);
  CHECK(error_code([&] { store.verify_entry(EntryId{}); }) == ErrorCode::NotFound);

  // flip a byte inside the last record's ciphertext
  const auto size = std::filesystem::file_size(fx.path);
  flip_byte(fx.path, size - 200);
  CHECK(error_code([&] { store.verify_entry(b.id); }) == ErrorCode::IntegrityError);
  CHECK(store.verify_entry(a.id).ok());

  RegistryStore reopened(fx.path, fx.keys.key_digest);
  CHECK(reopened.entry_count() == 1);
  CHECK(reopened.corrupt_offsets().size() == 1);
  CHECK(error_code([&] { reopened.verify_entry(b.id); }) == ErrorCode::IntegrityError);
}

TEST_CASE("reopening a store reproduces entries, order and bytes") {
  StoreFixture fx;
  std::vector<RegistryEntry> inserted;
  std::string exported;
  {
    RegistryStore store(fx.path, fx.keys.key_digest);
    store.register_producer(fx.acme.identity);
    store.register_producer(fx.zeta.identity);
    for (int i = 0; i < 40; ++i) {
      inserted.push_back(fx.entry(i % 3 ? fx.acme : fx.zeta, 1000 + i));
      store.insert_entry(inserted.back());
    }
    exported = store.export_jsonl();
  }
  const Bytes log_before = read_file(fx.path);
  const Bytes idx_before = read_file(fx.path + ".idx");
  CHECK(idx_before.size() == 40 * 28);

  RegistryStore store(fx.path, fx.keys.key_digest);
  CHECK(store.entries() == inserted);
  CHECK(store.export_jsonl() == exported);
  CHECK(store.corrupt_offsets().empty());
  CHECK(store.producer("zeta") == fx.zeta.identity);
  CHECK(read_file(fx.path) == log_before);
  CHECK(read_file(fx.path + ".idx") == idx_before);
  for (const auto& e : inserted) CHECK(store.verify_entry(e.id).ok());

  // export: one JSON object per line, each a valid entry
  std::istringstream lines(exported);
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) CHECK(entry_from_json(nlohmann::json::parse(line)) == inserted[n++]);
  CHECK(n == 40);
}

TEST_CASE("appends never rewrite earlier records") {
  StoreFixture fx;
  RegistryStore store(fx.path, fx.keys.key_digest);
  store.register_producer(fx.acme.identity);
  Bytes previous = read_file(fx.path);
  std::size_t count = 0;
  for (int i = 0; i < 25; ++i) {
    store.insert_entry(fx.entry(fx.acme, i));
    const Bytes now = read_file(fx.path);
    REQUIRE(now.size() > previous.size());
    CHECK(sha256(std::span(now).first(previous.size())) == sha256(previous));
    CHECK(store.entry_count() == ++count);
    previous = now;
  }
}

TEST_CASE("index sidecar is rebuilt when missing or stale") {
  StoreFixture fx;
  std::vector<RegistryEntry> inserted;
  {
    RegistryStore store(fx.path, fx.keys.key_digest);
    store.register_producer(fx.acme.identity);
    for (int i = 0; i < 5; ++i) {
      inserted.push_back(fx.entry(fx.acme, i));
      store.insert_entry(inserted.back());
    }
  }
  const Bytes idx = read_file(fx.path + ".idx");

  std::filesystem::remove(fx.path + ".idx");
  {
    RegistryStore store(fx.path, fx.keys.key_digest);
    CHECK(store.entries() == inserted);
    CHECK(store.verify_entry(inserted[3].id).ok());
  }
  CHECK(read_file(fx.path + ".idx") == idx);

  write_file(fx.path + ".idx", Bytes{1, 2, 3});
  {
    RegistryStore store(fx.path, fx.keys.key_digest);
    CHECK(store.verify_entry(inserted[4].id).ok());
  }
  CHECK(read_file(fx.path + ".idx") == idx);
}

TEST_CASE("incomplete tail append is truncated, lost indexed data is an error") {
  StoreFixture fx;
  std::vector<RegistryEntry> inserted;
  {
    RegistryStore store(fx.path, fx.keys.key_digest);
    store.register_producer(fx.acme.identity);
    for (int i = 0; i < 3; ++i) {
      inserted.push_back(fx.entry(fx.acme, i));
      store.insert_entry(inserted.back());
    }
  }
  const auto full = std::filesystem::file_size(fx.path);
  const Bytes idx = read_file(fx.path + ".idx");

  // a half-written record with no index slot: dropped on open
  {
    std::ofstream out(fx.path, std::ios::binary | std::ios::app);
    out.write("\x40\x00\x00\x00\x02partial", 12);
  }
  {
    RegistryStore store(fx.path, fx.keys.key_digest);
    CHECK(store.entry_count() == 3);
  }
  CHECK(std::filesystem::file_size(fx.path) == full);

  // the index still names the last record but the log lost it
  std::filesystem::resize_file(fx.path, full - 10);
  write_file(fx.path + ".idx", idx);
  CHECK(error_code([&] { RegistryStore(fx.path, fx.keys.key_digest); }) ==
        ErrorCode::IntegrityError);
}
