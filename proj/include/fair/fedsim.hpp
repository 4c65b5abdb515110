#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fair/data.hpp"
#include "fair/eval.hpp"
#include "fair/memory.hpp"
#include "fair/model.hpp"
#include "fair/subspace.hpp"

namespace fair {

enum class Mode { kFairHet, kFairHom, kFullTrn, kFedAvg };
enum class SubspacePolicy { kConsistent, kInconsistent };
enum class LocalUnit { kEpochs, kSteps };

std::string to_string(Mode mode);
Mode parse_mode(const std::string& text);
std::string to_string(SubspacePolicy policy);
SubspacePolicy parse_subspace_policy(const std::string& text);
std::string to_string(LocalUnit unit);
LocalUnit parse_local_unit(const std::string& text);

/// "A1x-A2x-...-Acx": devices ordered by id fall into c near-equal contiguous
/// groups; device d gets factor A_{floor(d*c/N)} and alpha = 1/factor.
struct CapacityScheme {
  std::string spec;
  std::vector<std::uint64_t> group_factors;
  std::vector<std::uint64_t> factors;  // per device
  std::vector<double> alphas;          // per device

  std::uint64_t num_devices() const { return factors.size(); }
};

CapacityScheme parse_capacity_scheme(const std::string& spec, std::uint64_t num_devices);

struct RunConfig {
  Mode mode = Mode::kFairHet;
  std::uint64_t rounds = 100;             // T
  std::uint64_t devices_per_round = 10;   // K
  std::uint64_t local_epochs = 1;         // E
  LocalUnit local_unit = LocalUnit::kEpochs;
  std::uint64_t dim = 8;
  SgdParams sgd;
  double init_sd = 0.1;
  std::uint64_t seed = 1;
  std::uint64_t eval_every = 10;
  std::uint64_t ndcg_k = 20;
  SubspacePolicy subspaces = SubspacePolicy::kConsistent;
  bool sign_hash = false;
  /// Worker threads for local training; 0 = hardware concurrency.
  unsigned threads = 1;

  /// Throws std::invalid_argument on the first violated constraint.
  void validate(std::uint64_t num_devices) const;
};

/// Raised when parameters stop being finite.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::uint64_t device, const std::string& what)
      : std::runtime_error(what), device_(device) {}
  std::uint64_t device() const { return device_; }

 private:
  std::uint64_t device_;
};

struct ServerState {
  std::vector<double> theta;  // num_items * dim item-table parameters
  std::uint64_t round = 0;
};

struct ClientUpdate {
  std::uint64_t device = 0;
  std::vector<double> psi;
  std::uint64_t samples = 0;
  double mean_loss = 0.0;
  std::uint64_t steps = 0;
};

struct RoundSummary {
  std::uint64_t round = 0;
  std::vector<std::uint64_t> sampled;
  double mean_loss = 0.0;
};

/// theta <- sum_i p_i S_i psi_i with p_i = n_i / sum_j n_j (uniform when every
/// n_i is 0). Updates are summed in the order given.
std::vector<double> aggregate_updates(std::span<const ClientUpdate> updates,
                                      std::span<const Subspace* const> subspaces,
                                      std::uint64_t n);

/// K devices drawn uniformly without replacement from `eligible`, returned
/// in ascending order. Determined by (seed, round).
std::vector<std::uint64_t> sample_devices(std::span<const std::uint64_t> eligible,
                                          std::uint64_t k, std::uint64_t seed,
                                          std::uint64_t round);

/// RNG stream owned by one device for one round.
std::mt19937_64 device_rng(std::uint64_t seed, std::uint64_t round, std::uint64_t device);

/// The FAIR server plus the persistent device-local state (user vectors),
/// advanced one round at a time.
class Simulator {
 public:
  /// `dataset` must already carry its train/test split.
  Simulator(RunConfig config, InteractionDataset dataset, CapacityScheme scheme);

  const RunConfig& config() const { return config_; }
  const InteractionDataset& dataset() const { return dataset_; }
  const UserIndex& index() const { return index_; }
  std::uint64_t num_devices() const { return dataset_.num_users; }
  std::uint64_t n() const { return n_; }

  ServerState& server() { return server_; }
  const ServerState& server() const { return server_; }

  /// Per-device alpha after applying the mode (FAIR-HOM flattens, FEDAVG = 1).
  double alpha(std::uint64_t device) const { return alphas_[device]; }
  const Subspace& subspace(std::uint64_t device) const { return subspaces_[device]; }
  std::span<const std::uint64_t> eligible_devices() const { return eligible_; }

  std::span<const double> user_vectors() const { return user_vecs_; }
  std::span<const double> user_vector(std::uint64_t device) const;

  /// Peak metered parameter count during the device's last local training.
  std::size_t last_peak_parameters(std::uint64_t device) const { return peaks_[device]; }

  /// Runs local training for one device starting from psi; does not touch
  /// the server.
  ClientUpdate train_device(std::uint64_t device, std::span<const double> psi,
                            std::uint64_t round);

  /// reduce -> local train -> recover -> aggregate for the given devices.
  RoundSummary run_round(std::span<const std::uint64_t> sampled);

  /// Samples K devices for the next round and runs it.
  RoundSummary step();

  /// Continues for `rounds` more rounds, appending train loss every round
  /// and the eval metric every eval_every rounds and on the last one.
  const MetricsLog& run(std::uint64_t rounds);

  EvalResult evaluate() const;
  const MetricsLog& log() const { return log_; }

 private:
  void append(std::uint64_t round, const std::string& metric, double value);

  RunConfig config_;
  InteractionDataset dataset_;
  CapacityScheme scheme_;
  UserIndex index_;
  DevicePartition partition_;
  std::uint64_t n_;
  std::vector<double> alphas_;
  std::vector<Subspace> subspaces_;
  std::vector<std::uint64_t> eligible_;
  std::vector<double> user_vecs_;
  std::vector<std::size_t> peaks_;
  ServerState server_;
  MetricsLog log_;
};

/// Builds a Simulator and runs cfg.rounds rounds.
MetricsLog run_training(const RunConfig& config, const InteractionDataset& dataset,
                        const CapacityScheme& scheme);

}  // namespace fair
