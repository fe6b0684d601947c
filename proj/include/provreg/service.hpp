#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

#include "provreg/mpfhe.hpp"
#include "provreg/registry.hpp"

#include "json.hpp"

namespace httplib {
class Server;
}

namespace provreg {

/// `key = value` lines (TOML subset: comments with '#', optional quotes).
/// Every key can be overridden by an environment variable PROV_<KEY>.
struct ServiceConfig {
  std::string listen = "127.0.0.1:8080";
  std::string store_path = "registry.log";
  std::string public_key_path = "public.key";
  std::string evaluation_key_path = "evaluation.key";
  std::string key_digest;  // optional hex pin of the active key
  std::uint32_t quorum = 0;  // 0: take m from the public key
  unsigned workers = 0;      // 0: hardware concurrency
  std::chrono::seconds result_ttl{600};

  static ServiceConfig parse(std::string_view text);
  static ServiceConfig load(const std::string& path);
  void apply_env();
  void set(const std::string& key, const std::string& value);

  std::string host() const;
  int port() const;
};

/// Maps library error codes onto HTTP status codes.
int http_status(ErrorCode code);

struct Response {
  int status = 200;
  nlohmann::json body;
};

/// Transport-independent request handlers for the registry service.
///
/// Query results stay encrypted; plaintext is only released by
/// post_share once m distinct parties have submitted decryption shares
/// for that request id. Pending results expire after the configured TTL.
class Service {
 public:
  using Clock = std::chrono::steady_clock;

  struct Options {
    unsigned workers = 0;
    std::chrono::seconds result_ttl{600};
    std::uint64_t seed = 0x5eed;
    std::function<Clock::time_point()> clock = [] { return Clock::now(); };
  };

  Service(RegistryStore& store, SimBackend backend, Options options);

  Response post_entries(const std::string& body);
  Response post_query(const std::string& body);
  Response post_share(const std::string& request_id, const std::string& body);
  Response get_health() const;
  Response get_stats() const;

  std::size_t pending_requests() const;

 private:
  struct Pending {
    Ciphertext result;
    Digest result_digest{};
    QueryMode mode = QueryMode::Or;
    Clock::time_point created;
    std::map<std::uint32_t, DecryptionShare> shares;
    std::optional<std::uint64_t> plaintext;
  };

  template <class Fn>
  Response guarded(Fn&& fn);
  void purge_expired();
  nlohmann::json decrypt_status(const std::string& id, const Pending& p) const;

  RegistryStore& store_;
  SimBackend backend_;
  Options options_;

  mutable std::mutex mutex_;
  Rng rng_;
  std::unordered_map<std::string, Pending> pending_;
  GateCounts gate_totals_;
  std::uint64_t queries_ = 0;
  std::uint64_t inserts_ = 0;
  std::uint64_t decryptions_ = 0;
};

/// Registers the REST routes on an httplib server.
void bind_routes(httplib::Server& server, Service& service);

}  // namespace provreg
