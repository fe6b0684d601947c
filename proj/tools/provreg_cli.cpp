// provreg: operator command line for the content-provenance registry.
//
// Every subcommand runs locally against files; `serve` exposes the same
// store over HTTP. Errors go to stderr as one JSON object and exit 1.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "provreg/formats.hpp"
#include "provreg/mpfhe.hpp"
#include "provreg/registry.hpp"
#include "provreg/service.hpp"
#include "provreg/stattest.hpp"

// after Eigen: <resolv.h> defines a macro that collides with Eigen internals
#include "httplib.h"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace provreg;

namespace {

enum class Format { Text, Json, Csv };

// Flat key/value report rendered in the selected output format.
class Report {
 public:
  template <class T>
  Report& add(const std::string& key, T&& value) {
    fields_.emplace_back(key, json(std::forward<T>(value)));
    return *this;
  }

  void print(Format fmt, std::ostream& os = std::cout) const {
    switch (fmt) {
      case Format::Json: {
        json obj = json::object();
        for (const auto& [k, v] : fields_) obj[k] = v;
        os << obj.dump() << '\n';
        break;
      }
      case Format::Csv:
        for (std::size_t i = 0; i < fields_.size(); ++i)
          os << (i ? "," : "") << fields_[i].first;
        os << '\n';
        for (std::size_t i = 0; i < fields_.size(); ++i)
          os << (i ? "," : "") << scalar(fields_[i].second);
        os << '\n';
        break;
      case Format::Text:
        for (const auto& [k, v] : fields_) os << k << ": " << scalar(v) << '\n';
        break;
    }
  }

 private:
  static std::string scalar(const json& v) {
    return v.is_string() ? v.get<std::string>() : v.dump();
  }
  std::vector<std::pair<std::string, json>> fields_;
};

PublicKey load_public_key(const std::string& path) {
  return PublicKey::decode(read_file(path));
}

EvaluationKey load_evaluation_key(const std::string& path) {
  return EvaluationKey::decode(read_file(path));
}

std::string text_of(const Bytes& b) { return std::string(b.begin(), b.end()); }

void write_text(const std::string& path, const std::string& text) {
  write_file(path, Bytes(text.begin(), text.end()));
}

std::vector<std::pair<std::string, PerceptualHash>> read_hash_csv(const std::string& path,
                                                                  std::size_t k) {
  std::vector<std::pair<std::string, PerceptualHash>> out;
  std::istringstream in(text_of(read_file(path)));
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos)
      throw Error(ErrorCode::FormatError, path + ":" + std::to_string(lineno) + ": expected id,hex");
    out.emplace_back(line.substr(0, comma), hash_from_hex(line.substr(comma + 1), k));
  }
  return out;
}

std::uint64_t now_seconds() {
  return static_cast<std::uint64_t>(std::time(nullptr));
}

Rng seeded(std::optional<std::uint64_t> seed) {
  return Rng(seed ? *seed : std::random_device{}());
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

json gates_json(const GateCounts& g) {
  return {{"xor", g.xor_gates}, {"and", g.and_gates}, {"or", g.or_gates}, {"not", g.not_gates}};
}

// Threshold from either a distance t or a target false-positive rate.
std::uint64_t resolve_distance(std::optional<int> t, std::optional<double> target, int k) {
  if (target) return static_cast<std::uint64_t>(threshold_for_fpr(*target, k).distance());
  const int d = t.value_or(8);
  if (d < 0 || d > k) throw Error(ErrorCode::OutOfRange, "t must be in [0, k]");
  return static_cast<std::uint64_t>(d);
}

struct Options {
  Format format = Format::Text;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
  int k = kDefaultHashBits;

  // paths
  std::string embeddings, model, out, store = "registry.log";
  std::string public_key = "public.key", evaluation_key = "evaluation.key";
  std::string hashes, hashes_out, hash_hex, result, config;
  std::vector<std::string> shares;
  std::string share;
  std::string entry_id;
  std::string out_dir = ".";

  int dim = kDefaultHashBits;
  std::optional<int> t;
  std::optional<double> target_fpr;
  std::uint32_t n = 2, m = 0;
  std::size_t random = 0;
  std::string producer = "producer", producer_name;
  std::uint64_t producer_seed = 1;
  std::optional<std::uint64_t> created_at;
  std::optional<std::string> producer_filter;
  std::string mode = "or";
  std::size_t entries = 1000;
  std::size_t trials = 5;
  std::optional<std::string> listen;
};

void cmd_fit_pca(const Options& o) {
  const EmbeddingSet set = load_embeddings(o.embeddings);
  const auto model = fit_whitening(set.values, o.dim);
  save_model(o.out, model);

  const Eigen::MatrixXd x = set.values.cast<double>();
  const double total = ((x.rowwise() - x.colwise().mean()).array().square().sum()) /
                       double(x.rows() - 1);
  const double kept = model.eigenvalues.sum();
  std::vector<double> top;
  for (Eigen::Index i = 0; i < std::min<Eigen::Index>(5, model.output_dim); ++i)
    top.push_back(model.eigenvalues(i));
  Report()
      .add("samples", set.values.rows())
      .add("input_dim", model.input_dim)
      .add("output_dim", model.output_dim)
      .add("total_variance", total)
      .add("retained_variance", kept)
      .add("retained_fraction", total > 0 ? kept / total : 0.0)
      .add("smallest_kept_eigenvalue", model.eigenvalues(model.output_dim - 1))
      .add("top_eigenvalues", top)
      .add("model", o.out)
      .print(o.format);
}

void cmd_hash(const Options& o) {
  const auto model = load_model(o.model);
  const EmbeddingSet set = load_embeddings(o.embeddings);
  std::string csv;
  for (Eigen::Index i = 0; i < set.values.rows(); ++i) {
    const std::string id = set.ids.empty() ? std::to_string(i) : set.ids[std::size_t(i)];
    const Eigen::VectorXf row = set.values.row(i).transpose();
    csv += id + "," + to_hex(hash_embedding(model, row)) + "\n";
  }
  if (o.out.empty() || o.out == "-")
    std::cout << csv;
  else
    write_text(o.out, csv);
  if (!o.out.empty() && o.out != "-")
    Report().add("hashes", set.values.rows()).add("out", o.out).print(o.format);
}

void cmd_threshold(const Options& o) {
  MatchThreshold m;
  if (o.target_fpr)
    m = threshold_for_fpr(*o.target_fpr, o.k);
  else
    m = MatchThreshold::from_distance(o.t.value_or(8), o.k);
  const auto p = fpr(m.tau, o.k);
  Report()
      .add("k", o.k)
      .add("tau", m.tau)
      .add("t", m.distance())
      .add("fpr", p.to_double())
      .add("fpr_exact", p.to_fraction())
      .print(o.format);
}

void cmd_keygen(const Options& o) {
  const std::uint32_t m = o.m ? o.m : o.n;
  const auto [parties, keys] = setup(o.n, m, o.seed.value_or(std::random_device{}()));
  fs::create_directories(o.out_dir);
  const fs::path dir(o.out_dir);
  write_file((dir / "public.key").string(), keys.public_key.encode());
  write_file((dir / "evaluation.key").string(), keys.evaluation_key.encode());
  std::vector<std::string> files;
  for (const auto& s : keys.shares) {
    files.push_back((dir / ("party-" + std::to_string(s.party.index) + ".share")).string());
    write_file(files.back(), s.encode());
  }
  Report()
      .add("n", parties.n)
      .add("m", parties.m)
      .add("key_digest", hex_encode(keys.key_digest))
      .add("public_key", (dir / "public.key").string())
      .add("evaluation_key", (dir / "evaluation.key").string())
      .add("shares", files)
      .print(o.format);
}

void cmd_insert(const Options& o) {
  const PublicKey pk = load_public_key(o.public_key);
  Rng rng = seeded(o.seed);
  std::vector<std::pair<std::string, PerceptualHash>> items;
  if (!o.hashes.empty()) items = read_hash_csv(o.hashes, std::size_t(o.k));
  for (std::size_t i = 0; i < o.random; ++i) {
    PerceptualHash h(static_cast<std::size_t>(o.k));
    for (std::size_t b = 0; b < h.size(); ++b) h.set(b, rng() & 1);
    items.emplace_back("random-" + std::to_string(i), h);
  }
  if (items.empty()) throw Error(ErrorCode::EmptyInput, "nothing to insert");

  const auto producer = ProducerKeypair::from_seed(
      o.producer, o.producer_name.empty() ? o.producer : o.producer_name, o.producer_seed);
  RegistryStore store(o.store, pk.digest());
  store.register_producer(producer.identity);
  const std::uint64_t ts = o.created_at.value_or(now_seconds());
  std::string emitted;
  for (const auto& [id, h] : items) {
    const auto entry =
        make_entry(producer, encrypt_hash(pk, h, rng), ts, rng, {{"source_id", id}});
    store.insert_entry(entry);
    emitted += entry_id_hex(entry.id) + "," + to_hex(h) + "\n";
  }
  if (!o.hashes_out.empty()) write_text(o.hashes_out, emitted);
  Report()
      .add("inserted", items.size())
      .add("entries", store.entry_count())
      .add("producer", producer.identity.id)
      .add("store", o.store)
      .print(o.format);
}

void cmd_query(const Options& o) {
  const PublicKey pk = load_public_key(o.public_key);
  const SimBackend backend(pk, load_evaluation_key(o.evaluation_key));
  const RegistryStore store(o.store, pk.digest());
  Rng rng = seeded(o.seed);
  const QueryMode mode = parse_query_mode(o.mode);
  const std::uint64_t t = resolve_distance(o.t, o.target_fpr, o.k);
  const auto query = encrypt_hash(pk, hash_from_hex(o.hash_hex, std::size_t(o.k)), rng);
  const auto threshold = encrypt_threshold(pk, t, width_for(std::uint64_t(o.k)), rng);
  const auto db = store.scan_for_query(o.producer_filter);
  const auto outcome = evaluate_query(backend, db, query, threshold, mode, rng, o.threads);

  const json file = {{"mode", to_string(mode)},
                     {"t", t},
                     {"entries", db.size()},
                     {"result", base64_encode(outcome.result.serialize())}};
  write_text(o.out, file.dump() + "\n");
  const auto g = outcome.gates.total();
  Report()
      .add("mode", to_string(mode))
      .add("t", t)
      .add("entries", db.size())
      .add("result", o.out)
      .add("xor_ms", outcome.timings.xor_ms)
      .add("hd_ms", outcome.timings.hd_ms)
      .add("full_ms", outcome.timings.full_ms)
      .add("xor_gates", g.xor_gates)
      .add("and_gates", g.and_gates)
      .add("or_gates", g.or_gates)
      .add("not_gates", g.not_gates)
      .print(o.format);
}

struct ResultFile {
  QueryMode mode;
  Ciphertext ct;
};

ResultFile load_result(const std::string& path) {
  try {
    const json j = json::parse(text_of(read_file(path)));
    return {parse_query_mode(j.at("mode").get<std::string>()),
            Ciphertext::deserialize(base64_decode(j.at("result").get<std::string>()))};
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, path + ": " + e.what());
  }
}

// A secret share file (PHSS) is turned into a decryption share on the spot;
// anything else must be a serialized decryption share.
DecryptionShare load_decryption_share(const std::string& path, const Ciphertext& ct) {
  const Bytes raw = read_file(path);
  if (raw.size() >= 4 && std::equal(raw.begin(), raw.begin() + 4, "PHSS"))
    return partial_decrypt(SecretShare::decode(raw), ct);
  return DecryptionShare::deserialize(raw);
}

void cmd_partial(const Options& o) {
  const auto res = load_result(o.result);
  const auto share = partial_decrypt(SecretShare::decode(read_file(o.share)), res.ct);
  write_file(o.out, share.serialize());
  Report().add("party", share.party).add("out", o.out).print(o.format);
}

void cmd_decrypt(const Options& o) {
  const PublicKey pk = load_public_key(o.public_key);
  const auto res = load_result(o.result);
  std::vector<DecryptionShare> shares;
  for (const auto& path : o.shares) shares.push_back(load_decryption_share(path, res.ct));
  const std::uint64_t value = combine_shares(shares, res.ct, pk);
  Report r;
  if (res.mode == QueryMode::Or)
    r.add("match", value != 0);
  else
    r.add("count", value);
  r.print(o.format);
}

void cmd_bench(const Options& o) {
  const std::uint64_t seed = o.seed.value_or(1);
  const auto [parties, keys] = setup(2, 2, seed);
  const SimBackend backend(keys.public_key, keys.evaluation_key);
  Rng rng(seed + 1);
  auto random_hash = [&] {
    PerceptualHash h(static_cast<std::size_t>(o.k));
    for (std::size_t b = 0; b < h.size(); ++b) h.set(b, rng() & 1);
    return h;
  };
  std::vector<EncryptedHash> db;
  db.reserve(o.entries);
  for (std::size_t i = 0; i < o.entries; ++i)
    db.push_back(encrypt_hash(keys.public_key, random_hash(), rng));
  const auto threshold = encrypt_threshold(keys.public_key, 8, width_for(std::uint64_t(o.k)), rng);
  const QueryMode mode = parse_query_mode(o.mode);

  std::vector<double> xor_ms, hd_ms, full_ms;
  PhaseGates gates;
  for (std::size_t trial = 0; trial < std::max<std::size_t>(o.trials, 1); ++trial) {
    const auto q = encrypt_hash(keys.public_key, random_hash(), rng);
    const auto outcome = evaluate_query(backend, db, q, threshold, mode, rng, o.threads);
    xor_ms.push_back(outcome.timings.xor_ms);
    hd_ms.push_back(outcome.timings.hd_ms);
    full_ms.push_back(outcome.timings.full_ms);
    gates = outcome.gates;
  }
  const unsigned workers = resolve_workers(o.threads);
  const double mx = median(xor_ms), mh = median(hd_ms), mf = median(full_ms);

  struct Row {
    std::string source;
    double xr, hd, full;
    std::string note;
  };
  const Row rows[] = {
      {"measured", mx, mh, mf,
       "simulation backend, " + std::to_string(workers) + " threads, " +
           std::to_string(o.entries) + " entries"},
      {"paper-reported", 26, 134, 137, "real boolean FHE, 56 cores, 1000 entries"},
  };
  const GateCounts total = gates.total();

  switch (o.format) {
    case Format::Csv:
      std::cout << "source,xor_ms,hd_ms,full_ms,note\n";
      for (const auto& r : rows)
        std::cout << r.source << ',' << r.xr << ',' << r.hd << ',' << r.full << ",\"" << r.note
                  << "\"\n";
      std::cout << "\nphase,xor,and,or,not\n";
      for (const auto& [name, g] : {std::pair{"xor", gates.xor_phase}, {"hd", gates.hd_phase},
                                    {"decision", gates.decision_phase}, {"total", total}})
        std::cout << name << ',' << g.xor_gates << ',' << g.and_gates << ',' << g.or_gates << ','
                  << g.not_gates << '\n';
      break;
    case Format::Json: {
      json out = {{"entries", o.entries},
                  {"trials", xor_ms.size()},
                  {"threads", workers},
                  {"mode", to_string(mode)},
                  {"median_ms", {{"xor", mx}, {"hd", mh}, {"full", mf}}},
                  {"gates",
                   {{"xor_phase", gates_json(gates.xor_phase)},
                    {"hd_phase", gates_json(gates.hd_phase)},
                    {"decision_phase", gates_json(gates.decision_phase)},
                    {"total", gates_json(total)}}},
                  {"paper_reported_ms", {{"xor", 26}, {"hd", 134}, {"full", 137}}}};
      std::cout << out.dump() << '\n';
      break;
    }
    case Format::Text: {
      std::printf("%-16s %10s %10s %10s  %s\n", "source", "XOR ms", "HD ms", "Full ms", "note");
      for (const auto& r : rows)
        std::printf("%-16s %10.3f %10.3f %10.3f  %s\n", r.source.c_str(), r.xr, r.hd, r.full,
                    r.note.c_str());
      std::printf("\n%-10s %10s %10s %10s %10s\n", "phase", "xor", "and", "or", "not");
      for (const auto& [name, g] : {std::pair{"xor", gates.xor_phase}, {"hd", gates.hd_phase},
                                    {"decision", gates.decision_phase}, {"total", total}})
        std::printf("%-10s %10llu %10llu %10llu %10llu\n", name,
                    (unsigned long long)g.xor_gates, (unsigned long long)g.and_gates,
                    (unsigned long long)g.or_gates, (unsigned long long)g.not_gates);
      break;
    }
  }
}

void cmd_export(const Options& o) {
  const RegistryStore store(o.store, load_public_key(o.public_key).digest());
  const std::string jsonl = store.export_jsonl();
  if (o.out.empty() || o.out == "-")
    std::cout << jsonl;
  else
    write_text(o.out, jsonl);
}

void cmd_verify(const Options& o) {
  const RegistryStore store(o.store, load_public_key(o.public_key).digest());
  std::vector<EntryId> ids;
  if (!o.entry_id.empty())
    ids.push_back(entry_id_from_hex(o.entry_id));
  else
    for (const auto& e : store.entries()) ids.push_back(e.id);

  std::size_t ok = 0, bad = 0;
  json failures = json::array();
  for (const auto& id : ids) {
    try {
      const auto r = store.verify_entry(id);
      if (r.ok()) {
        ++ok;
        continue;
      }
      failures.push_back({{"entry_id", entry_id_hex(id)},
                          {"signature_ok", r.signature_ok},
                          {"key_ok", r.key_ok}});
    } catch (const Error& e) {
      failures.push_back({{"entry_id", entry_id_hex(id)}, {"error", to_string(e.code())}});
    }
    ++bad;
  }
  Report()
      .add("checked", ids.size())
      .add("ok", ok)
      .add("failed", bad)
      .add("corrupt_records", store.corrupt_offsets().size())
      .print(o.format);
  for (const auto& f : failures) std::cerr << f.dump() << '\n';
  if (bad || !store.corrupt_offsets().empty())
    throw Error(ErrorCode::IntegrityError, std::to_string(bad) + " entries failed verification");
}

void cmd_serve(const Options& o) {
  ServiceConfig cfg = o.config.empty() ? ServiceConfig{} : ServiceConfig::load(o.config);
  cfg.apply_env();
  if (o.listen) cfg.listen = *o.listen;
  if (o.threads) cfg.workers = o.threads;

  const PublicKey pk = load_public_key(cfg.public_key_path);
  if (!cfg.key_digest.empty() && hex_decode(cfg.key_digest) != Bytes(pk.digest().begin(), pk.digest().end()))
    throw Error(ErrorCode::KeyMismatch, "configured key_digest does not match " + cfg.public_key_path);
  if (cfg.quorum && cfg.quorum != pk.m)
    throw Error(ErrorCode::InvalidThreshold, "configured quorum differs from the key's m");

  RegistryStore store(cfg.store_path, pk.digest());
  Service::Options opts;
  opts.workers = cfg.workers;
  opts.result_ttl = cfg.result_ttl;
  opts.seed = o.seed.value_or(std::random_device{}());
  Service service(store, SimBackend(pk, load_evaluation_key(cfg.evaluation_key_path)), opts);

  httplib::Server server;
  bind_routes(server, service);
  std::cerr << json{{"listening", cfg.listen},
                    {"entries", store.entry_count()},
                    {"key_digest", hex_encode(pk.digest())}}
                   .dump()
            << std::endl;
  if (!server.listen(cfg.host(), cfg.port()))
    throw Error(ErrorCode::IoError, "cannot listen on " + cfg.listen);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"provreg: private content-provenance registry"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;

  std::map<std::string, Format> formats{
      {"text", Format::Text}, {"json", Format::Json}, {"csv", Format::Csv}};
  app.add_option("--format", o.format, "Output format: text|json|csv")
      ->transform(CLI::CheckedTransformer(formats, CLI::ignore_case))
      ->envname("PROV_FORMAT");

  auto seed_opt = [&](CLI::App* c) {
    c->add_option("--seed", o.seed, "Seed for all randomness")->envname("PROV_SEED");
  };
  auto store_opt = [&](CLI::App* c) {
    c->add_option("--store", o.store, "Registry log file")->envname("PROV_STORE");
  };
  auto pk_opt = [&](CLI::App* c) {
    c->add_option("--public-key", o.public_key, "Aggregated public key file")
        ->envname("PROV_PUBLIC_KEY");
  };
  auto ek_opt = [&](CLI::App* c) {
    c->add_option("--evaluation-key", o.evaluation_key, "Evaluation key file")
        ->envname("PROV_EVALUATION_KEY");
  };
  auto threads_opt = [&](CLI::App* c) {
    c->add_option("--threads", o.threads, "Worker threads (0 = all cores)")
        ->envname("PROV_WORKERS");
  };
  auto k_opt = [&](CLI::App* c) {
    c->add_option("--k", o.k, "Hash length in bits")->check(CLI::Range(1, 4096));
  };
  auto threshold_opts = [&](CLI::App* c) {
    auto* t = c->add_option("--t", o.t, "Maximum Hamming distance");
    auto* f = c->add_option("--target-fpr", o.target_fpr, "Target false-positive rate");
    t->excludes(f);
  };

  auto* fit = app.add_subcommand("fit-pca", "Fit the whitening model on an embedding file");
  fit->add_option("--embeddings", o.embeddings, "PHEM embedding file")->required();
  fit->add_option("--out", o.out, "Model output (PHWM)")->required();
  fit->add_option("--dim", o.dim, "Output dimension")->check(CLI::PositiveNumber);
  fit->callback([&] { cmd_fit_pca(o); });

  auto* hash = app.add_subcommand("hash", "Hash embeddings to id,hex CSV");
  hash->add_option("--model", o.model, "Whitening model (PHWM)")->required();
  hash->add_option("--embeddings", o.embeddings, "PHEM embedding file")->required();
  hash->add_option("--out", o.out, "CSV output (default stdout)");
  hash->callback([&] { cmd_hash(o); });

  auto* thr = app.add_subcommand("threshold", "Calibrate the match threshold");
  k_opt(thr);
  threshold_opts(thr);
  thr->callback([&] { cmd_threshold(o); });

  auto* keygen = app.add_subcommand("keygen", "Run the m-of-n key setup");
  keygen->add_option("--n", o.n, "Number of parties")->check(CLI::Range(2u, 255u));
  keygen->add_option("--m", o.m, "Decryption quorum (default n)");
  keygen->add_option("--out-dir", o.out_dir, "Directory for key files");
  seed_opt(keygen);
  keygen->callback([&] { cmd_keygen(o); });

  auto* insert = app.add_subcommand("insert", "Encrypt, sign and store hashes");
  store_opt(insert);
  pk_opt(insert);
  seed_opt(insert);
  k_opt(insert);
  insert->add_option("--hashes", o.hashes, "CSV of id,hex hashes");
  insert->add_option("--random", o.random, "Also insert N random hashes");
  insert->add_option("--hashes-out", o.hashes_out, "Write entry_id,hex of inserted hashes");
  insert->add_option("--producer", o.producer, "Producer id");
  insert->add_option("--producer-name", o.producer_name, "Producer display name");
  insert->add_option("--producer-seed", o.producer_seed, "Seed of the producer signing key");
  insert->add_option("--created-at", o.created_at, "Entry timestamp (default now)");
  insert->callback([&] { cmd_insert(o); });

  auto* query = app.add_subcommand("query", "Evaluate an encrypted query over the store");
  store_opt(query);
  pk_opt(query);
  ek_opt(query);
  seed_opt(query);
  threads_opt(query);
  k_opt(query);
  threshold_opts(query);
  query->add_option("--hash", o.hash_hex, "Query hash as hex")->required();
  query->add_option("--mode", o.mode, "or|count")->check(CLI::IsMember({"or", "count"}));
  query->add_option("--producer", o.producer_filter, "Restrict to one producer");
  query->add_option("--out", o.out, "Encrypted result file")->required();
  query->callback([&] { cmd_query(o); });

  auto* partial = app.add_subcommand("partial", "Produce one party's decryption share");
  partial->add_option("--result", o.result, "Encrypted result file")->required();
  partial->add_option("--share", o.share, "Party secret share file")->required();
  partial->add_option("--out", o.out, "Decryption share output")->required();
  partial->callback([&] { cmd_partial(o); });

  auto* decrypt = app.add_subcommand("decrypt", "Combine shares and print the result");
  pk_opt(decrypt);
  decrypt->add_option("--result", o.result, "Encrypted result file")->required();
  decrypt->add_option("--shares", o.shares, "Party share or decryption share files")
      ->required();
  decrypt->callback([&] { cmd_decrypt(o); });

  auto* bench = app.add_subcommand("bench", "Per-phase latency and gate counts");
  bench->add_option("--entries", o.entries, "Registry size")->check(CLI::PositiveNumber);
  bench->add_option("--trials", o.trials, "Queries to time");
  bench->add_option("--mode", o.mode, "or|count")->check(CLI::IsMember({"or", "count"}));
  threads_opt(bench);
  seed_opt(bench);
  k_opt(bench);
  bench->callback([&] { cmd_bench(o); });

  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--config", o.config, "Config file (key = value)");
  serve->add_option("--listen", o.listen, "host:port, overrides the config");
  threads_opt(serve);
  seed_opt(serve);
  serve->callback([&] { cmd_serve(o); });

  auto* exp = app.add_subcommand("export", "Dump entries as line-delimited JSON");
  store_opt(exp);
  pk_opt(exp);
  exp->add_option("--out", o.out, "Output file (default stdout)");
  exp->callback([&] { cmd_export(o); });

  auto* verify = app.add_subcommand("verify", "Re-check stored signatures and checksums");
  store_opt(verify);
  pk_opt(verify);
  verify->add_option("--id", o.entry_id, "Single entry id (default all)");
  verify->callback([&] { cmd_verify(o); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::cerr << json{{"error", to_string(e.code())}, {"message", e.what()}}.dump() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "Internal"}, {"message", e.what()}}.dump() << '\n';
    return 2;
  }
  return 0;
}
