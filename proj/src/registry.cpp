#include "provreg/registry.hpp"

#include <sodium.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>

namespace provreg {

namespace {

constexpr std::uint8_t kProducerRecord = 1;
constexpr std::uint8_t kEntryRecord = 2;
constexpr std::size_t kIndexSlotBytes = 16 + 8 + 4;

std::array<std::uint8_t, 8> checksum(std::span<const std::uint8_t> payload) {
  const Digest d = sha256(payload);
  std::array<std::uint8_t, 8> out;
  std::memcpy(out.data(), d.data(), out.size());
  return out;
}

Bytes encode_producer(const ProducerIdentity& p) {
  ByteWriter out;
  out.str(p.id);
  out.raw(p.verification_key);
  out.str(p.display_name);
  return std::move(out).bytes();
}

ProducerIdentity decode_producer(ByteReader& in) {
  ProducerIdentity p;
  p.id = in.str();
  p.verification_key = in.fixed<32>();
  p.display_name = in.str();
  return p;
}

}  // namespace

ProducerKeypair ProducerKeypair::from_seed(std::string id, std::string display_name,
                                           const std::array<std::uint8_t, 32>& seed) {
  if (sodium_init() < 0) throw Error(ErrorCode::IoError, "libsodium init failed");
  ProducerKeypair kp;
  kp.identity.id = std::move(id);
  kp.identity.display_name = std::move(display_name);
  crypto_sign_seed_keypair(kp.identity.verification_key.data(), kp.secret_key.data(),
                           seed.data());
  return kp;
}

ProducerKeypair ProducerKeypair::from_seed(std::string id, std::string display_name,
                                           std::uint64_t seed) {
  Rng rng(seed);
  std::array<std::uint8_t, 32> bytes;
  for (std::size_t i = 0; i < bytes.size(); i += 8) {
    const std::uint64_t v = rng();
    std::memcpy(bytes.data() + i, &v, 8);
  }
  return from_seed(std::move(id), std::move(display_name), bytes);
}

Bytes signed_message(const EncryptedHash& ct, const std::string& producer,
                     std::uint64_t created_at) {
  ByteWriter out;
  out.raw(ct.key_digest);
  out.blob(ct.serialize());
  out.str(producer);
  out.u64(created_at);
  return std::move(out).bytes();
}

RegistryEntry make_entry(const ProducerKeypair& producer, EncryptedHash ct,
                         std::uint64_t created_at, Rng& rng,
                         std::map<std::string, std::string> metadata) {
  RegistryEntry e;
  for (std::size_t i = 0; i < e.id.size(); i += 8) {
    const std::uint64_t v = rng();
    std::memcpy(e.id.data() + i, &v, 8);
  }
  e.encrypted_hash = std::move(ct);
  e.producer = producer.identity.id;
  e.created_at = created_at;
  e.metadata = std::move(metadata);
  const Bytes msg = signed_message(e.encrypted_hash, e.producer, e.created_at);
  e.signature.resize(crypto_sign_BYTES);
  crypto_sign_detached(e.signature.data(), nullptr, msg.data(), msg.size(),
                       producer.secret_key.data());
  return e;
}

bool verify_signature(const ProducerIdentity& producer, const RegistryEntry& entry) {
  if (entry.producer != producer.id || entry.signature.size() != crypto_sign_BYTES)
    return false;
  const Bytes msg = signed_message(entry.encrypted_hash, entry.producer, entry.created_at);
  return crypto_sign_verify_detached(entry.signature.data(), msg.data(), msg.size(),
                                     producer.verification_key.data()) == 0;
}

Bytes encode_entry(const RegistryEntry& e) {
  ByteWriter out;
  out.raw(e.id);
  out.blob(e.encrypted_hash.serialize());
  out.str(e.producer);
  out.u64(e.created_at);
  out.blob(e.signature);
  out.u32(static_cast<std::uint32_t>(e.metadata.size()));
  for (const auto& [k, v] : e.metadata) {
    out.str(k);
    out.str(v);
  }
  return std::move(out).bytes();
}

namespace {

RegistryEntry decode_entry_body(ByteReader& in) {
  RegistryEntry e;
  e.id = in.fixed<16>();
  e.encrypted_hash = Ciphertext::deserialize(in.blob());
  e.producer = in.str();
  e.created_at = in.u64();
  e.signature = in.blob();
  const std::uint32_t count = in.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string k = in.str();
    e.metadata[std::move(k)] = in.str();
  }
  return e;
}

}  // namespace

RegistryEntry decode_entry(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  RegistryEntry e = decode_entry_body(in);
  in.expect_end();
  return e;
}

std::string entry_id_hex(const EntryId& id) { return hex_encode(id); }

EntryId entry_id_from_hex(std::string_view hex) {
  const Bytes b = hex_decode(hex);
  if (b.size() != 16) throw Error(ErrorCode::FormatError, "entry id must be 16 bytes");
  EntryId id;
  std::memcpy(id.data(), b.data(), 16);
  return id;
}

nlohmann::json entry_to_json(const RegistryEntry& e) {
  return {
      {"entry_id", entry_id_hex(e.id)},
      {"ciphertext", base64_encode(e.encrypted_hash.serialize())},
      {"producer", e.producer},
      {"created_at", e.created_at},
      {"signature", base64_encode(e.signature)},
      {"metadata", e.metadata},
  };
}

RegistryEntry entry_from_json(const nlohmann::json& j) {
  try {
    RegistryEntry e;
    e.id = entry_id_from_hex(j.at("entry_id").get<std::string>());
    e.encrypted_hash =
        Ciphertext::deserialize(base64_decode(j.at("ciphertext").get<std::string>()));
    e.producer = j.at("producer").get<std::string>();
    e.created_at = j.at("created_at").get<std::uint64_t>();
    e.signature = base64_decode(j.at("signature").get<std::string>());
    if (j.contains("metadata"))
      e.metadata = j.at("metadata").get<std::map<std::string, std::string>>();
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::FormatError, ex.what());
  }
}

std::size_t RegistryStore::IdHash::operator()(const EntryId& id) const {
  std::size_t h;
  std::memcpy(&h, id.data(), sizeof h);
  return h;
}

RegistryStore::RegistryStore(std::string path, Digest active_key)
    : path_(std::move(path)), index_path_(path_ + ".idx"), active_key_(active_key) {
  load();
}

void RegistryStore::load() {
  namespace fs = std::filesystem;
  if (!fs::exists(path_)) write_file(path_, {});
  const Bytes log_bytes = read_file(path_);
  const std::span<const std::uint8_t> log(log_bytes);

  std::set<std::uint64_t> boundaries;
  std::unordered_map<EntryId, IndexSlot, IdHash> scanned;
  std::size_t pos = 0;
  while (log.size() - pos >= 4) {
    ByteReader header(log.subspan(pos, 4));
    const std::uint32_t len = header.u32();
    if (log.size() - pos - 4 < std::uint64_t(len) + 8) break;
    auto payload = log.subspan(pos + 4, len);
    auto stored = log.subspan(pos + 4 + len, 8);
    boundaries.insert(pos);
    const auto sum = checksum(payload);
    bool good = std::equal(sum.begin(), sum.end(), stored.begin());
    if (good) {
      try {
        ByteReader in(payload);
        const std::uint8_t type = in.u8();
        if (type == kProducerRecord) {
          auto p = decode_producer(in);
          in.expect_end();
          producers_[p.id] = std::move(p);
        } else if (type == kEntryRecord) {
          RegistryEntry e = decode_entry_body(in);
          in.expect_end();
          auto prod = producers_.find(e.producer);
          if (prod == producers_.end() || !verify_signature(prod->second, e)) {
            good = false;
          } else {
            scanned[e.id] = {pos, len};
            entries_.push_back(std::move(e));
          }
        } else {
          good = false;
        }
      } catch (const Error&) {
        good = false;
      }
    }
    if (!good) corrupt_.push_back(pos);
    pos += 4 + len + 8;
  }

  // Index sidecar: trusted only if it agrees with every record we could read.
  bool index_ok = false;
  std::unordered_map<EntryId, IndexSlot, IdHash> from_file;
  if (fs::exists(index_path_)) {
    const Bytes idx = read_file(index_path_);
    if (idx.size() % kIndexSlotBytes == 0) {
      index_ok = true;
      ByteReader in(idx);
      while (in.remaining() > 0) {
        EntryId id = in.fixed<16>();
        IndexSlot slot{in.u64(), in.u32()};
        if (!boundaries.count(slot.offset)) index_ok = false;
        from_file[id] = slot;
      }
      for (const auto& [id, slot] : scanned) {
        auto it = from_file.find(id);
        if (it == from_file.end() || it->second.offset != slot.offset) index_ok = false;
      }
      // an indexed record past the readable prefix means the log lost data
      for (const auto& [id, slot] : from_file)
        if (slot.offset >= pos)
          throw Error(ErrorCode::IntegrityError,
                      "index references offset " + std::to_string(slot.offset) +
                          " beyond readable log");
    }
  }

  if (pos < log.size()) fs::resize_file(path_, pos);  // incomplete tail append
  log_size_ = pos;

  if (index_ok) {
    index_ = std::move(from_file);
  } else {
    index_ = std::move(scanned);
    rebuild_index_file();
  }
}

void RegistryStore::rebuild_index_file() const {
  std::vector<std::pair<std::uint64_t, std::pair<EntryId, IndexSlot>>> slots;
  for (const auto& [id, slot] : index_) slots.push_back({slot.offset, {id, slot}});
  std::sort(slots.begin(), slots.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  ByteWriter out;
  for (const auto& [offset, rec] : slots) {
    out.raw(rec.first);
    out.u64(rec.second.offset);
    out.u32(rec.second.length);
  }
  write_file(index_path_, out.bytes());
}

void RegistryStore::append_record(std::span<const std::uint8_t> payload,
                                  const std::optional<EntryId>& indexed_id) {
  ByteWriter rec;
  rec.u32(static_cast<std::uint32_t>(payload.size()));
  rec.raw(payload);
  rec.raw(checksum(payload));
  {
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw Error(ErrorCode::IoError, "cannot append to " + path_);
    out.write(reinterpret_cast<const char*>(rec.bytes().data()),
              static_cast<std::streamsize>(rec.bytes().size()));
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, "short append to " + path_);
  }
  const std::uint64_t offset = log_size_;
  log_size_ += rec.bytes().size();
  if (indexed_id) {
    const IndexSlot slot{offset, static_cast<std::uint32_t>(payload.size())};
    index_[*indexed_id] = slot;
    ByteWriter idx;
    idx.raw(*indexed_id);
    idx.u64(slot.offset);
    idx.u32(slot.length);
    std::ofstream out(index_path_, std::ios::binary | std::ios::app);
    out.write(reinterpret_cast<const char*>(idx.bytes().data()),
              static_cast<std::streamsize>(idx.bytes().size()));
  }
}

void RegistryStore::register_producer(const ProducerIdentity& producer) {
  std::unique_lock lock(mutex_);
  if (auto it = producers_.find(producer.id); it != producers_.end()) {
    if (it->second.verification_key == producer.verification_key) return;
    throw Error(ErrorCode::DuplicateId,
                "producer " + producer.id + " already registered with another key");
  }
  ByteWriter payload;
  payload.u8(kProducerRecord);
  payload.raw(encode_producer(producer));
  append_record(payload.bytes(), std::nullopt);
  producers_[producer.id] = producer;
}

std::optional<ProducerIdentity> RegistryStore::producer(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = producers_.find(id);
  if (it == producers_.end()) return std::nullopt;
  return it->second;
}

EntryId RegistryStore::insert_entry(const RegistryEntry& entry) {
  std::unique_lock lock(mutex_);
  if (entry.encrypted_hash.key_digest != active_key_)
    throw Error(ErrorCode::KeyMismatch, "entry encrypted under an inactive key");
  if (entry.encrypted_hash.size() == 0)
    throw Error(ErrorCode::FormatError, "entry has no ciphertext bits");
  auto prod = producers_.find(entry.producer);
  if (prod == producers_.end())
    throw Error(ErrorCode::BadSignature, "unknown producer " + entry.producer);
  if (!verify_signature(prod->second, entry))
    throw Error(ErrorCode::BadSignature,
                "signature does not verify for producer " + entry.producer);
  if (index_.count(entry.id))
    throw Error(ErrorCode::DuplicateId, "entry " + entry_id_hex(entry.id) + " exists");

  ByteWriter payload;
  payload.u8(kEntryRecord);
  payload.raw(encode_entry(entry));
  append_record(payload.bytes(), entry.id);
  entries_.push_back(entry);
  return entry.id;
}

std::vector<EncryptedHash> RegistryStore::scan_for_query(
    const std::optional<std::string>& producer) const {
  std::shared_lock lock(mutex_);
  std::vector<EncryptedHash> out;
  for (const auto& e : entries_)
    if (!producer || e.producer == *producer) out.push_back(e.encrypted_hash);
  return out;
}

Bytes RegistryStore::read_record_payload(const IndexSlot& slot) const {
  std::ifstream in(path_, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path_);
  in.seekg(static_cast<std::streamoff>(slot.offset));
  Bytes rec(4 + std::size_t(slot.length) + 8);
  in.read(reinterpret_cast<char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
  if (!in) throw Error(ErrorCode::IntegrityError, "record truncated on disk");
  ByteReader r(rec);
  if (r.u32() != slot.length)
    throw Error(ErrorCode::IntegrityError, "record length changed on disk");
  auto payload = r.raw(slot.length);
  auto stored = r.raw(8);
  const auto sum = checksum(payload);
  if (!std::equal(sum.begin(), sum.end(), stored.begin()))
    throw Error(ErrorCode::IntegrityError,
                "checksum mismatch at offset " + std::to_string(slot.offset));
  return Bytes(payload.begin(), payload.end());
}

VerificationReport RegistryStore::verify_entry(const EntryId& id) const {
  std::shared_lock lock(mutex_);
  auto it = index_.find(id);
  if (it == index_.end())
    throw Error(ErrorCode::NotFound, "no entry " + entry_id_hex(id));
  const Bytes payload = read_record_payload(it->second);
  RegistryEntry e;
  try {
    ByteReader in(payload);
    if (in.u8() != kEntryRecord) throw Error(ErrorCode::FormatError, "not an entry record");
    e = decode_entry_body(in);
    in.expect_end();
  } catch (const Error& ex) {
    throw Error(ErrorCode::IntegrityError, ex.what());
  }
  if (e.id != id) throw Error(ErrorCode::IntegrityError, "record holds another entry id");

  VerificationReport report;
  report.id = id;
  report.producer = e.producer;
  report.created_at = e.created_at;
  auto prod = producers_.find(e.producer);
  report.signature_ok = prod != producers_.end() && verify_signature(prod->second, e);
  report.key_ok = e.encrypted_hash.key_digest == active_key_;
  return report;
}

std::size_t RegistryStore::entry_count() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

std::vector<RegistryEntry> RegistryStore::entries() const {
  std::shared_lock lock(mutex_);
  return entries_;
}

std::vector<std::uint64_t> RegistryStore::corrupt_offsets() const {
  std::shared_lock lock(mutex_);
  return corrupt_;
}

std::string RegistryStore::export_jsonl() const {
  std::shared_lock lock(mutex_);
  std::string out;
  for (const auto& e : entries_) {
    out += entry_to_json(e).dump();
    out += '\n';
  }
  return out;
}

}  // namespace provreg
