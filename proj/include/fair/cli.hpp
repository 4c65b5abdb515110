#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fair/data.hpp"
#include "fair/fedsim.hpp"
#include "fair/quadratic.hpp"

namespace fair {

/// Library version string, e.g. "0.1.0".
std::string version();

/// Bad or inconsistent configuration. The message is a single line.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DatasetSource { kSynth, kCsv };

struct DatasetSpec {
  DatasetSource source = DatasetSource::kSynth;
  std::filesystem::path path;  // csv only, absolute once resolved
  SynthParams synth;           // synth only (kind is taken from `kind`)
  FeedbackKind kind = FeedbackKind::kImplicit;
  std::uint64_t holdout_per_user = 2;
  std::uint64_t split_seed = 1;
};

/// Everything a run needs. Round-trips through JSON.
struct RunSpec {
  DatasetSpec dataset;
  RunConfig config;
  std::string scheme = "1x";
  std::filesystem::path output;  // metrics CSV, absolute once resolved
};

/// Parses and validates a config object. Relative paths are resolved
/// against `base_dir`. Unknown keys at any level are rejected.
RunSpec parse_run_spec(const nlohmann::json& doc, const std::filesystem::path& base_dir);
RunSpec load_run_spec(const std::filesystem::path& config_path);

/// Fully resolved form: every key present, paths absolute. Feeding it back
/// to parse_run_spec gives the same RunSpec.
nlohmann::json to_json(const RunSpec& spec);

/// Loads or synthesizes the dataset and applies the train/test split.
InteractionDataset build_dataset(const DatasetSpec& spec);

/// Manifest path written next to a metrics CSV: "<stem>.manifest.json".
std::filesystem::path manifest_path(const std::filesystem::path& metrics_csv);

/// Writes via a sibling temp file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

struct RunOptions {
  /// Overrides RunConfig::threads when set (0 = hardware concurrency).
  std::optional<unsigned> threads;
};

/// Exit codes: 0 ok, 1 config or validation error, 2 divergence.
int cmd_run(const std::filesystem::path& config_path, const RunOptions& options,
            std::ostream& out, std::ostream& err);

struct VerifyOptions {
  /// Test hook: builds the smaller subspaces of the collapsibility suite from
  /// an unrelated hash so their bucket maps no longer nest.
  bool corrupt_bucket_map = false;
};

struct SuiteResult {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

struct VerifySuite {
  std::string name;
  std::string description;
  std::function<SuiteResult(const VerifyOptions&)> run;
};

const std::vector<VerifySuite>& verify_suites();

/// Exit 0 iff every suite passes; otherwise 1 and the first failure is named.
int cmd_verify(bool list_only, const VerifyOptions& options, std::ostream& out,
               std::ostream& err);

/// Prints the report and writes `round,gap` rows for the checkpoints to
/// `csv_path`. Exit 1 on invalid parameters.
int cmd_quadratic(const QuadraticBenchParams& params, const std::filesystem::path& csv_path,
                  std::ostream& out, std::ostream& err);

}  // namespace fair
