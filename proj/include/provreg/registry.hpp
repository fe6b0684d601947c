#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "provreg/bytes.hpp"
#include "provreg/mpfhe.hpp"

#include "json.hpp"

namespace provreg {

using EntryId = std::array<std::uint8_t, 16>;
using VerificationKey = std::array<std::uint8_t, 32>;

/// Content-producing organization registered with the store.
struct ProducerIdentity {
  std::string id;
  VerificationKey verification_key{};
  std::string display_name;

  bool operator==(const ProducerIdentity&) const = default;
};

/// Ed25519 signing identity. Deterministic from a 32-byte seed.
struct ProducerKeypair {
  ProducerIdentity identity;
  std::array<std::uint8_t, 64> secret_key{};

  static ProducerKeypair from_seed(std::string id, std::string display_name,
                                   const std::array<std::uint8_t, 32>& seed);
  static ProducerKeypair from_seed(std::string id, std::string display_name,
                                   std::uint64_t seed);
};

struct RegistryEntry {
  EntryId id{};
  EncryptedHash encrypted_hash;
  std::string producer;
  std::uint64_t created_at = 0;  // UTC seconds
  Bytes signature;
  std::map<std::string, std::string> metadata;

  bool operator==(const RegistryEntry&) const = default;
};

/// key digest | u32 len + ciphertext bytes | u32 len + producer id UTF-8 |
/// u64 timestamp, little-endian.
Bytes signed_message(const EncryptedHash& ct, const std::string& producer,
                     std::uint64_t created_at);

RegistryEntry make_entry(const ProducerKeypair& producer, EncryptedHash ct,
                         std::uint64_t created_at, Rng& rng,
                         std::map<std::string, std::string> metadata = {});

bool verify_signature(const ProducerIdentity& producer, const RegistryEntry& entry);

Bytes encode_entry(const RegistryEntry& entry);
RegistryEntry decode_entry(std::span<const std::uint8_t> bytes);

nlohmann::json entry_to_json(const RegistryEntry& entry);
RegistryEntry entry_from_json(const nlohmann::json& j);

std::string entry_id_hex(const EntryId& id);
EntryId entry_id_from_hex(std::string_view hex);

struct VerificationReport {
  EntryId id{};
  std::string producer;
  std::uint64_t created_at = 0;
  bool signature_ok = false;
  bool key_ok = false;

  bool ok() const { return signature_ok && key_ok; }
};

/// Append-only log of producers and signed entries.
///
/// Log file: records of u32 LE payload length | payload | 8-byte checksum
/// (leading bytes of SHA-256(payload)). A sidecar "<path>.idx" maps entry
/// ids to record offsets; it is rebuilt from the log when missing or stale.
/// One writer at a time; readers see a consistent prefix.
class RegistryStore {
 public:
  RegistryStore(std::string path, Digest active_key);

  RegistryStore(const RegistryStore&) = delete;
  RegistryStore& operator=(const RegistryStore&) = delete;

  /// Idempotent for an identical identity; DuplicateId if the id is taken
  /// by a different key.
  void register_producer(const ProducerIdentity& producer);
  std::optional<ProducerIdentity> producer(const std::string& id) const;

  EntryId insert_entry(const RegistryEntry& entry);

  /// Ciphertexts in insertion order, optionally restricted to one producer.
  std::vector<EncryptedHash> scan_for_query(
      const std::optional<std::string>& producer = std::nullopt) const;

  /// Re-reads the record from disk and re-checks checksum, signature and key.
  VerificationReport verify_entry(const EntryId& id) const;

  std::size_t entry_count() const;
  std::vector<RegistryEntry> entries() const;
  const Digest& active_key() const { return active_key_; }
  const std::string& path() const { return path_; }
  /// Offsets of records whose checksum failed when the log was opened.
  std::vector<std::uint64_t> corrupt_offsets() const;

  /// One JSON object per line.
  std::string export_jsonl() const;

 private:
  struct IndexSlot {
    std::uint64_t offset = 0;
    std::uint32_t length = 0;
  };
  struct IdHash {
    std::size_t operator()(const EntryId& id) const;
  };

  void load();
  void rebuild_index_file() const;
  void append_record(std::span<const std::uint8_t> payload,
                     const std::optional<EntryId>& indexed_id);
  Bytes read_record_payload(const IndexSlot& slot) const;

  std::string path_;
  std::string index_path_;
  Digest active_key_{};
  mutable std::shared_mutex mutex_;
  std::uint64_t log_size_ = 0;
  std::vector<RegistryEntry> entries_;
  std::unordered_map<std::string, ProducerIdentity> producers_;
  std::unordered_map<EntryId, IndexSlot, IdHash> index_;
  std::vector<std::uint64_t> corrupt_;
};

}  // namespace provreg
