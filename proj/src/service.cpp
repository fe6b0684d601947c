#include "provreg/service.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "httplib.h"

namespace provreg {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

nlohmann::json gates_json(const GateCounts& g) {
  return {{"xor", g.xor_gates}, {"and", g.and_gates}, {"or", g.or_gates},
          {"not", g.not_gates}};
}

nlohmann::json error_body(const Error& e) {
  return {{"error", std::string(to_string(e.code()))}, {"message", e.what()}};
}

nlohmann::json parse_body(const std::string& body) {
  try {
    return nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::FormatError, ex.what());
  }
}

template <class T>
T field(const nlohmann::json& j, const char* name) {
  try {
    return j.at(name).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::FormatError, std::string("missing or invalid field ") + name);
  }
}

std::string normalize_request_id(const std::string& text) {
  const Bytes raw = hex_decode(text);
  if (raw.size() != 16)
    throw Error(ErrorCode::FormatError, "request_id must be 16 bytes of hex");
  return hex_encode(raw);
}

}  // namespace

void ServiceConfig::set(const std::string& key, const std::string& value) {
  try {
    if (key == "listen") listen = value;
    else if (key == "store") store_path = value;
    else if (key == "public_key") public_key_path = value;
    else if (key == "evaluation_key") evaluation_key_path = value;
    else if (key == "key_digest") key_digest = value;
    else if (key == "quorum") quorum = static_cast<std::uint32_t>(std::stoul(value));
    else if (key == "workers") workers = static_cast<unsigned>(std::stoul(value));
    else if (key == "result_ttl") result_ttl = std::chrono::seconds(std::stoll(value));
    else throw Error(ErrorCode::FormatError, "unknown config key " + key);
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::FormatError, "bad value for " + key + ": " + value);
  }
}

ServiceConfig ServiceConfig::parse(std::string_view text) {
  ServiceConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::FormatError, "config line " + std::to_string(lineno));
    std::string value = trim(std::string_view(t).substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    cfg.set(trim(std::string_view(t).substr(0, eq)), value);
  }
  return cfg;
}

ServiceConfig ServiceConfig::load(const std::string& path) {
  const Bytes raw = read_file(path);
  return parse(std::string(raw.begin(), raw.end()));
}

void ServiceConfig::apply_env() {
  static constexpr std::pair<const char*, const char*> kVars[] = {
      {"PROV_LISTEN", "listen"},
      {"PROV_STORE", "store"},
      {"PROV_PUBLIC_KEY", "public_key"},
      {"PROV_EVALUATION_KEY", "evaluation_key"},
      {"PROV_KEY_DIGEST", "key_digest"},
      {"PROV_QUORUM", "quorum"},
      {"PROV_WORKERS", "workers"},
      {"PROV_RESULT_TTL", "result_ttl"},
  };
  for (const auto& [var, key] : kVars)
    if (const char* v = std::getenv(var)) set(key, v);
}

std::string ServiceConfig::host() const {
  return listen.substr(0, listen.rfind(':'));
}

int ServiceConfig::port() const {
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos)
    throw Error(ErrorCode::FormatError, "listen must be host:port");
  return std::stoi(listen.substr(colon + 1));
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadSignature: return 403;
    case ErrorCode::KeyMismatch:
    case ErrorCode::DuplicateId: return 409;
    case ErrorCode::EmptyDatabase:
    case ErrorCode::UnknownRequest:
    case ErrorCode::NotFound: return 404;
    case ErrorCode::IoError: return 500;
    default: return 400;
  }
}

Service::Service(RegistryStore& store, SimBackend backend, Options options)
    : store_(store),
      backend_(std::move(backend)),
      options_(std::move(options)),
      rng_(options_.seed) {
  if (store_.active_key() != backend_.key_digest())
    throw Error(ErrorCode::KeyMismatch, "store and backend use different keys");
}

template <class Fn>
Response Service::guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    return {http_status(e.code()), error_body(e)};
  }
}

void Service::purge_expired() {
  const auto now = options_.clock();
  std::erase_if(pending_, [&](const auto& kv) {
    return now - kv.second.created > options_.result_ttl;
  });
}

Response Service::post_entries(const std::string& body) {
  return guarded([&]() -> Response {
    const RegistryEntry entry = entry_from_json(parse_body(body));
    const EntryId id = store_.insert_entry(entry);
    std::lock_guard lock(mutex_);
    ++inserts_;
    return {200, {{"entry_id", entry_id_hex(id)}}};
  });
}

Response Service::post_query(const std::string& body) {
  return guarded([&]() -> Response {
    const auto req = parse_body(body);
    const std::string request_id = normalize_request_id(field<std::string>(req, "request_id"));
    const auto query = Ciphertext::deserialize(base64_decode(field<std::string>(req, "query")));
    const auto threshold =
        Ciphertext::deserialize(base64_decode(field<std::string>(req, "threshold")));
    const QueryMode mode = parse_query_mode(field<std::string>(req, "mode"));
    std::optional<std::string> producer;
    if (req.contains("producer")) producer = field<std::string>(req, "producer");

    if (query.key_digest != backend_.key_digest() ||
        threshold.key_digest != backend_.key_digest())
      throw Error(ErrorCode::KeyMismatch, "query not under the active key");

    std::uint64_t seal_seed;
    {
      std::lock_guard lock(mutex_);
      purge_expired();
      if (pending_.count(request_id))
        throw Error(ErrorCode::DuplicateId, "request id already in use");
      seal_seed = rng_();
    }

    const auto db = store_.scan_for_query(producer);
    Rng seal_rng(seal_seed);
    QueryOutcome outcome =
        evaluate_query(backend_, db, query, threshold, mode, seal_rng, options_.workers);

    nlohmann::json out = {
        {"request_id", request_id},
        {"mode", to_string(mode)},
        {"result", base64_encode(outcome.result.serialize())},
        {"gates", gates_json(outcome.gates.total())},
        {"xor_array_gates", outcome.gates.xor_phase.xor_gates},
        {"timing",
         {{"xor_ms", outcome.timings.xor_ms},
          {"hd_ms", outcome.timings.hd_ms},
          {"full_ms", outcome.timings.full_ms}}},
    };

    std::lock_guard lock(mutex_);
    Pending p;
    p.result_digest = outcome.result.digest();
    p.result = std::move(outcome.result);
    p.mode = mode;
    p.created = options_.clock();
    if (!pending_.emplace(request_id, std::move(p)).second)
      throw Error(ErrorCode::DuplicateId, "request id already in use");
    gate_totals_ += outcome.gates.total();
    ++queries_;
    return {200, std::move(out)};
  });
}

nlohmann::json Service::decrypt_status(const std::string& id, const Pending& p) const {
  nlohmann::json out = {
      {"request_id", id},
      {"shares", p.shares.size()},
      {"required", backend_.public_key().m},
  };
  if (!p.plaintext) {
    out["status"] = "pending";
    return out;
  }
  out["status"] = "complete";
  if (p.mode == QueryMode::Or)
    out["match"] = *p.plaintext != 0;
  else
    out["count"] = *p.plaintext;
  return out;
}

Response Service::post_share(const std::string& raw_request_id, const std::string& body) {
  return guarded([&]() -> Response {
    const std::string request_id = normalize_request_id(raw_request_id);
    const auto msg = parse_body(body);
    const auto share =
        DecryptionShare::deserialize(base64_decode(field<std::string>(msg, "share")));
    const auto party = field<std::uint32_t>(msg, "party_id");
    if (msg.contains("request_id") &&
        normalize_request_id(field<std::string>(msg, "request_id")) != request_id)
      throw Error(ErrorCode::BindingMismatch, "message names another request");
    if (share.party != party)
      throw Error(ErrorCode::BindingMismatch, "share was produced by another party");

    std::lock_guard lock(mutex_);
    purge_expired();
    auto it = pending_.find(request_id);
    if (it == pending_.end())
      throw Error(ErrorCode::UnknownRequest, "no pending request " + request_id);
    Pending& p = it->second;
    if (share.ct_digest != p.result_digest)
      throw Error(ErrorCode::BindingMismatch, "share is bound to another ciphertext");
    if (share.party >= backend_.public_key().n)
      throw Error(ErrorCode::BindingMismatch, "unknown party " + std::to_string(share.party));

    const bool fresh = p.shares.try_emplace(share.party, share).second;
    if (!p.plaintext && p.shares.size() >= backend_.public_key().m) {
      std::vector<DecryptionShare> quorum;
      for (const auto& [_, s] : p.shares) quorum.push_back(s);
      try {
        p.plaintext = combine_shares(quorum, p.result, backend_.public_key());
      } catch (const Error&) {
        if (fresh) p.shares.erase(share.party);
        throw;
      }
      ++decryptions_;
    }
    return {200, decrypt_status(request_id, p)};
  });
}

Response Service::get_health() const {
  return {200, {{"status", "ok"}, {"entries", store_.entry_count()}}};
}

Response Service::get_stats() const {
  std::lock_guard lock(mutex_);
  return {200,
          {
              {"entries", store_.entry_count()},
              {"key_digest", hex_encode(backend_.key_digest())},
              {"quorum", backend_.public_key().m},
              {"parties", backend_.public_key().n},
              {"inserts", inserts_},
              {"queries", queries_},
              {"decryptions", decryptions_},
              {"pending", pending_.size()},
              {"gates", gates_json(gate_totals_)},
          }};
}

std::size_t Service::pending_requests() const {
  std::lock_guard lock(mutex_);
  return pending_.size();
}

void bind_routes(httplib::Server& server, Service& service) {
  auto reply = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server.Post("/entries", [&service, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.post_entries(req.body));
  });
  server.Post("/query", [&service, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.post_query(req.body));
  });
  server.Post(R"(/decrypt/([0-9A-Fa-f]+)/shares)",
              [&service, reply](const httplib::Request& req, httplib::Response& res) {
                reply(res, service.post_share(req.matches[1], req.body));
              });
  server.Get("/health", [&service, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, service.get_health());
  });
  server.Get("/stats", [&service, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, service.get_stats());
  });
}

}  // namespace provreg
