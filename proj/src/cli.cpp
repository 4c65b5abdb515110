#include "fair/cli.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <ostream>
#include <sstream>

#ifndef FAIR_VERSION
#define FAIR_VERSION "0.0.0"
#endif

namespace fair {
namespace {

using nlohmann::json;

std::string qualified(const std::string& where, const std::string& key) {
  return where.empty() ? key : where + "." + key;
}

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) {
    throw ConfigError("config: " + (where.empty() ? std::string("top level") : where) +
                      " must be an object");
  }
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      throw ConfigError("config: unknown key '" + qualified(where, it.key()) + "'");
    }
  }
}

std::uint64_t get_uint(const json& obj, const std::string& where, const std::string& key,
                       std::uint64_t fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
    throw ConfigError("config: " + qualified(where, key) + " must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

double get_double(const json& obj, const std::string& where, const std::string& key,
                  double fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number() || !std::isfinite(v.get<double>())) {
    throw ConfigError("config: " + qualified(where, key) + " must be a finite number");
  }
  return v.get<double>();
}

std::string get_string(const json& obj, const std::string& where, const std::string& key,
                       const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_string()) throw ConfigError("config: " + qualified(where, key) + " must be a string");
  return v.get<std::string>();
}

bool get_bool(const json& obj, const std::string& where, const std::string& key, bool fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_boolean()) throw ConfigError("config: " + qualified(where, key) + " must be a boolean");
  return v.get<bool>();
}

// Rethrows enum parse failures as ConfigError tagged with the key.
template <typename Fn>
auto parse_enum(const std::string& key, const std::string& text, Fn&& parse) {
  try {
    return parse(text);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("config: " + key + ": " + e.what());
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& text) {
  const std::filesystem::path p(text);
  return (p.is_absolute() ? p : base / p).lexically_normal();
}

DatasetSpec parse_dataset(const json& obj, const std::filesystem::path& base_dir) {
  const std::string where = "dataset";
  if (!obj.is_object()) throw ConfigError("config: dataset must be an object");
  DatasetSpec spec;
  const auto source = get_string(obj, where, "source", "synth");
  if (source == "synth") {
    spec.source = DatasetSource::kSynth;
    check_keys(obj, where,
               {"source", "kind", "users", "items", "latent_dim", "density", "noise_sd", "seed",
                "holdout_per_user", "split_seed"});
    spec.synth.num_users = get_uint(obj, where, "users", spec.synth.num_users);
    spec.synth.num_items = get_uint(obj, where, "items", spec.synth.num_items);
    spec.synth.latent_dim = get_uint(obj, where, "latent_dim", spec.synth.latent_dim);
    spec.synth.density = get_double(obj, where, "density", spec.synth.density);
    spec.synth.noise_sd = get_double(obj, where, "noise_sd", spec.synth.noise_sd);
    spec.synth.seed = get_uint(obj, where, "seed", spec.synth.seed);
    if (spec.synth.num_users == 0 || spec.synth.num_items == 0 || spec.synth.latent_dim == 0) {
      throw ConfigError("config: dataset.users, dataset.items and dataset.latent_dim must be >= 1");
    }
    if (!(spec.synth.density > 0.0 && spec.synth.density <= 1.0)) {
      throw ConfigError("config: dataset.density must be in (0, 1]");
    }
    if (spec.synth.noise_sd < 0.0) throw ConfigError("config: dataset.noise_sd must be >= 0");
  } else if (source == "csv") {
    spec.source = DatasetSource::kCsv;
    check_keys(obj, where, {"source", "kind", "path", "holdout_per_user", "split_seed"});
    if (!obj.contains("path")) throw ConfigError("config: dataset.path is required for csv");
    spec.path = resolve(base_dir, get_string(obj, where, "path", ""));
  } else {
    throw ConfigError("config: dataset.source must be 'synth' or 'csv', got '" + source + "'");
  }
  spec.kind = parse_enum("dataset.kind", get_string(obj, where, "kind", "implicit"),
                         parse_feedback_kind);
  spec.synth.kind = spec.kind;
  spec.holdout_per_user = get_uint(obj, where, "holdout_per_user", spec.holdout_per_user);
  spec.split_seed = get_uint(obj, where, "split_seed", spec.split_seed);
  return spec;
}

void parse_model(const json& obj, RunConfig& cfg) {
  const std::string where = "model";
  check_keys(obj, where, {"dim", "l2", "learning_rate", "init_sd"});
  cfg.dim = get_uint(obj, where, "dim", cfg.dim);
  cfg.sgd.l2 = get_double(obj, where, "l2", cfg.sgd.l2);
  cfg.sgd.learning_rate = get_double(obj, where, "learning_rate", cfg.sgd.learning_rate);
  cfg.init_sd = get_double(obj, where, "init_sd", cfg.init_sd);
}

void parse_federation(const json& obj, RunConfig& cfg, std::string& scheme) {
  const std::string where = "federation";
  check_keys(obj, where,
             {"mode", "rounds", "devices_per_round", "local_epochs", "local_unit", "scheme",
              "seed", "eval_every", "ndcg_k", "subspaces", "sign_hash"});
  cfg.mode = parse_enum("federation.mode", get_string(obj, where, "mode", to_string(cfg.mode)),
                        parse_mode);
  cfg.rounds = get_uint(obj, where, "rounds", cfg.rounds);
  cfg.devices_per_round = get_uint(obj, where, "devices_per_round", cfg.devices_per_round);
  cfg.local_epochs = get_uint(obj, where, "local_epochs", cfg.local_epochs);
  cfg.local_unit =
      parse_enum("federation.local_unit",
                 get_string(obj, where, "local_unit", to_string(cfg.local_unit)), parse_local_unit);
  scheme = get_string(obj, where, "scheme", scheme);
  cfg.seed = get_uint(obj, where, "seed", cfg.seed);
  cfg.eval_every = get_uint(obj, where, "eval_every", cfg.eval_every);
  cfg.ndcg_k = get_uint(obj, where, "ndcg_k", cfg.ndcg_k);
  cfg.subspaces = parse_enum("federation.subspaces",
                             get_string(obj, where, "subspaces", to_string(cfg.subspaces)),
                             parse_subspace_policy);
  cfg.sign_hash = get_bool(obj, where, "sign_hash", cfg.sign_hash);
}

std::string format_g(double value, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, value);
  return buf;
}

}  // namespace

std::string version() { return FAIR_VERSION; }

RunSpec parse_run_spec(const json& doc, const std::filesystem::path& base_dir) {
  check_keys(doc, "", {"dataset", "model", "federation", "output"});
  RunSpec spec;
  if (doc.contains("dataset")) spec.dataset = parse_dataset(doc.at("dataset"), base_dir);
  if (doc.contains("model")) parse_model(doc.at("model"), spec.config);
  if (doc.contains("federation")) parse_federation(doc.at("federation"), spec.config, spec.scheme);
  if (!doc.contains("output")) throw ConfigError("config: output is required");
  const auto output = get_string(doc, "", "output", "");
  if (output.empty()) throw ConfigError("config: output must be a non-empty path");
  spec.output = resolve(base_dir, output);

  // Synthetic data fixes the device count up front, so check it now.
  if (spec.dataset.source == DatasetSource::kSynth) {
    try {
      parse_capacity_scheme(spec.scheme, spec.dataset.synth.num_users);
      spec.config.validate(spec.dataset.synth.num_users);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  } else {
    try {
      spec.config.validate(spec.config.devices_per_round);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }
  return spec;
}

RunSpec load_run_spec(const std::filesystem::path& config_path) {
  std::ifstream in(config_path);
  if (!in) throw ConfigError("config: cannot open " + config_path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + config_path.string() + ": " + e.what());
  }
  const auto base = std::filesystem::absolute(config_path).parent_path();
  return parse_run_spec(doc, base);
}

json to_json(const RunSpec& spec) {
  json dataset;
  const auto& d = spec.dataset;
  if (d.source == DatasetSource::kSynth) {
    dataset = {{"source", "synth"},         {"users", d.synth.num_users},
               {"items", d.synth.num_items}, {"latent_dim", d.synth.latent_dim},
               {"density", d.synth.density}, {"noise_sd", d.synth.noise_sd},
               {"seed", d.synth.seed}};
  } else {
    dataset = {{"source", "csv"}, {"path", d.path.string()}};
  }
  dataset["kind"] = to_string(d.kind);
  dataset["holdout_per_user"] = d.holdout_per_user;
  dataset["split_seed"] = d.split_seed;

  const auto& c = spec.config;
  json model = {{"dim", c.dim},
                {"l2", c.sgd.l2},
                {"learning_rate", c.sgd.learning_rate},
                {"init_sd", c.init_sd}};
  json federation = {{"mode", to_string(c.mode)},
                     {"rounds", c.rounds},
                     {"devices_per_round", c.devices_per_round},
                     {"local_epochs", c.local_epochs},
                     {"local_unit", to_string(c.local_unit)},
                     {"scheme", spec.scheme},
                     {"seed", c.seed},
                     {"eval_every", c.eval_every},
                     {"ndcg_k", c.ndcg_k},
                     {"subspaces", to_string(c.subspaces)},
                     {"sign_hash", c.sign_hash}};
  return {{"dataset", dataset},
          {"model", model},
          {"federation", federation},
          {"output", spec.output.string()}};
}

InteractionDataset build_dataset(const DatasetSpec& spec) {
  InteractionDataset raw = spec.source == DatasetSource::kSynth ? synth_lowrank(spec.synth)
                                                                : load_csv(spec.path, spec.kind);
  return split_train_test(raw, spec.holdout_per_user, spec.split_seed);
}

std::filesystem::path manifest_path(const std::filesystem::path& metrics_csv) {
  auto p = metrics_csv;
  p.replace_filename(metrics_csv.stem().string() + ".manifest.json");
  return p;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.close();
    if (!out) {
      std::filesystem::remove(tmp);
      throw std::runtime_error("failed writing " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

int cmd_run(const std::filesystem::path& config_path, const RunOptions& options,
            std::ostream& out, std::ostream& err) {
  RunSpec spec;
  InteractionDataset dataset;
  CapacityScheme scheme;
  try {
    spec = load_run_spec(config_path);
    dataset = build_dataset(spec.dataset);
    scheme = parse_capacity_scheme(spec.scheme, dataset.num_users);
    spec.config.validate(dataset.num_users);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  if (options.threads) spec.config.threads = *options.threads;

  MetricsLog log;
  try {
    log = run_training(spec.config, dataset, scheme);
  } catch (const DivergenceError& e) {
    err << "error: divergence on device " << e.device() << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  std::uint64_t train = 0;
  for (const auto& r : dataset.records) train += r.split == Split::kTrain ? 1 : 0;
  const json manifest = {
      {"version", version()},
      {"config", to_json(spec)},
      {"dataset",
       {{"users", dataset.num_users},
        {"items", dataset.num_items},
        {"train_records", train},
        {"test_records", dataset.records.size() - train},
        {"dropped_duplicates", dataset.dropped_duplicates}}},
  };
  try {
    write_file_atomic(spec.output, log.to_csv());
    write_file_atomic(manifest_path(spec.output), manifest.dump(2) + "\n");
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  out << "wrote " << log.records().size() << " metric rows to " << spec.output.string() << "\n";
  for (const auto& r : log.records()) {
    if (r.metric != "train_loss" && r.round == spec.config.rounds) {
      out << "final " << r.metric << " = " << format_g(r.value, 6) << "\n";
    }
  }
  return 0;
}

int cmd_quadratic(const QuadraticBenchParams& params, const std::filesystem::path& csv_path,
                  std::ostream& out, std::ostream& err) {
  ConvergenceReport report;
  try {
    report = quadratic_bench(params);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  out << "quadratic bench: n=" << params.n << " m=" << params.m
      << " devices=" << params.num_devices << " rounds=" << params.rounds
      << " local_steps=" << params.local_steps << " seed=" << params.seed << "\n";
  out << "F(theta*_sub) = " << format_g(report.optimum_sub, 10)
      << "  F(theta*) = " << format_g(report.optimum_full, 10) << "\n";
  out << "gap(1) = " << format_g(report.gap_at(1), 6) << "\n";
  std::string csv = "round,gap\n";
  for (const auto& p : report.checkpoints) {
    out << "gap(" << p.round << ") = " << format_g(p.gap, 6) << "\n";
    csv += std::to_string(p.round) + "," + format_g(p.gap, 17) + "\n";
  }
  out << "monotone: " << (report.monotone ? "yes" : "no") << "\n";
  const auto& s = report.spectrum;
  out << "eigen check: " << (s.pass && report.spectrum_all_devices ? "PASS" : "FAIL")
      << "  restricted [" << format_g(s.restricted_min, 8) << ", "
      << format_g(s.restricted_max, 8) << "] vs [mu, L] = [" << format_g(s.mu, 8) << ", "
      << format_g(s.lipschitz, 8) << "]\n";

  try {
    write_file_atomic(csv_path, csv);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  out << "wrote " << csv_path.string() << "\n";
  return 0;
}

}  // namespace fair
