#include "fair/fedsim.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

namespace fair {
namespace {

constexpr std::uint64_t kFamilySalt = 0xfa1;
constexpr std::uint64_t kInitSalt = 0xfa2;
constexpr std::uint64_t kUserSalt = 0xfa3;
constexpr std::uint64_t kSampleSalt = 0xfa4;
constexpr std::uint64_t kDeviceSalt = 0xfa5;
constexpr std::uint64_t kInconsistentSalt = 0xfa6;

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  {
    std::vector<std::jthread> workers;
    workers.reserve(threads);
    for (unsigned w = 0; w < threads; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::kFairHet: return "FAIR-HET";
    case Mode::kFairHom: return "FAIR-HOM";
    case Mode::kFullTrn: return "FULL-TRN";
    case Mode::kFedAvg: return "FEDAVG";
  }
  return "?";
}

Mode parse_mode(const std::string& text) {
  for (auto m : {Mode::kFairHet, Mode::kFairHom, Mode::kFullTrn, Mode::kFedAvg}) {
    if (text == to_string(m)) return m;
  }
  throw std::invalid_argument("unknown mode '" + text +
                              "' (expected FAIR-HET, FAIR-HOM, FULL-TRN or FEDAVG)");
}

std::string to_string(SubspacePolicy policy) {
  return policy == SubspacePolicy::kConsistent ? "consistent" : "inconsistent";
}

SubspacePolicy parse_subspace_policy(const std::string& text) {
  if (text == "consistent") return SubspacePolicy::kConsistent;
  if (text == "inconsistent") return SubspacePolicy::kInconsistent;
  throw std::invalid_argument("unknown subspace policy '" + text + "'");
}

std::string to_string(LocalUnit unit) { return unit == LocalUnit::kEpochs ? "epochs" : "steps"; }

LocalUnit parse_local_unit(const std::string& text) {
  if (text == "epochs") return LocalUnit::kEpochs;
  if (text == "steps") return LocalUnit::kSteps;
  throw std::invalid_argument("unknown local unit '" + text + "'");
}

CapacityScheme parse_capacity_scheme(const std::string& spec, std::uint64_t num_devices) {
  CapacityScheme scheme;
  scheme.spec = spec;
  std::size_t start = 0;
  while (start <= spec.size()) {
    const auto dash = std::min(spec.find('-', start), spec.size());
    const std::string_view token(spec.data() + start, dash - start);
    if (token.size() < 2 || token.back() != 'x') {
      throw std::invalid_argument("capacity scheme '" + spec + "': malformed group '" +
                                  std::string(token) + "'");
    }
    std::uint64_t factor = 0;
    const auto digits = token.substr(0, token.size() - 1);
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), factor);
    if (ec != std::errc() || ptr != digits.data() + digits.size()) {
      throw std::invalid_argument("capacity scheme '" + spec + "': malformed group '" +
                                  std::string(token) + "'");
    }
    if (factor == 0) {
      throw std::invalid_argument("capacity scheme '" + spec + "': factor must be positive");
    }
    scheme.group_factors.push_back(factor);
    start = dash + 1;
  }
  const auto groups = scheme.group_factors.size();
  if (num_devices < groups) {
    throw std::invalid_argument("capacity scheme '" + spec + "' has " + std::to_string(groups) +
                                " groups but only " + std::to_string(num_devices) + " devices");
  }
  for (std::uint64_t d = 0; d < num_devices; ++d) {
    const auto factor = scheme.group_factors[d * groups / num_devices];
    scheme.factors.push_back(factor);
    scheme.alphas.push_back(1.0 / static_cast<double>(factor));
  }
  return scheme;
}

void RunConfig::validate(std::uint64_t num_devices) const {
  if (rounds < 1) throw std::invalid_argument("rounds must be >= 1");
  if (local_epochs < 1) throw std::invalid_argument("local_epochs must be >= 1");
  if (devices_per_round < 1 || devices_per_round > num_devices) {
    throw std::invalid_argument("devices_per_round must be in [1, " +
                                std::to_string(num_devices) + "]");
  }
  if (dim < 1) throw std::invalid_argument("dim must be >= 1");
  if (!(sgd.learning_rate > 0.0) || !std::isfinite(sgd.learning_rate)) {
    throw std::invalid_argument("learning rate must be positive");
  }
  if (!(sgd.l2 >= 0.0)) throw std::invalid_argument("l2 must be >= 0");
  if (!(init_sd >= 0.0)) throw std::invalid_argument("init_sd must be >= 0");
  if (eval_every < 1) throw std::invalid_argument("eval_every must be >= 1");
  if (ndcg_k < 1) throw std::invalid_argument("ndcg_k must be >= 1");
}

std::vector<double> aggregate_updates(std::span<const ClientUpdate> updates,
                                      std::span<const Subspace* const> subspaces,
                                      std::uint64_t n) {
  if (updates.empty() || updates.size() != subspaces.size()) {
    throw std::invalid_argument("aggregate: need one subspace per update");
  }
  const double total = std::accumulate(
      updates.begin(), updates.end(), 0.0,
      [](double acc, const ClientUpdate& u) { return acc + static_cast<double>(u.samples); });
  std::vector<double> theta(n, 0.0);
  for (std::size_t i = 0; i < updates.size(); ++i) {
    const auto& s = *subspaces[i];
    const auto& psi = updates[i].psi;
    if (s.n() != n || psi.size() != s.m()) {
      throw std::invalid_argument("aggregate: update shape does not match its subspace");
    }
    const double p = total > 0.0 ? static_cast<double>(updates[i].samples) / total
                                 : 1.0 / static_cast<double>(updates.size());
    for (std::uint64_t a = 0; a < n; ++a) theta[a] += p * (s.sign(a) * psi[s.row_bucket(a)]);
  }
  return theta;
}

std::vector<std::uint64_t> sample_devices(std::span<const std::uint64_t> eligible,
                                          std::uint64_t k, std::uint64_t seed,
                                          std::uint64_t round) {
  std::vector<std::uint64_t> pool(eligible.begin(), eligible.end());
  std::sort(pool.begin(), pool.end());
  k = std::min<std::uint64_t>(k, pool.size());
  std::mt19937_64 rng(mix_seed(mix_seed(seed, kSampleSalt), round));
  for (std::uint64_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::mt19937_64 device_rng(std::uint64_t seed, std::uint64_t round, std::uint64_t device) {
  return std::mt19937_64(mix_seed(mix_seed(mix_seed(seed, kDeviceSalt), round), device));
}

Simulator::Simulator(RunConfig config, InteractionDataset dataset, CapacityScheme scheme)
    : config_(std::move(config)),
      dataset_(std::move(dataset)),
      scheme_(std::move(scheme)),
      index_(dataset_),
      partition_(partition_by_user(dataset_)),
      n_(dataset_.num_items * config_.dim) {
  const auto num = dataset_.num_users;
  if (num == 0 || dataset_.num_items == 0) throw std::invalid_argument("simulator: empty dataset");
  if (scheme_.num_devices() != num) {
    throw std::invalid_argument("simulator: capacity scheme covers " +
                                std::to_string(scheme_.num_devices()) + " devices, dataset has " +
                                std::to_string(num) + " users");
  }
  if (config_.dim < 1) throw std::invalid_argument("dim must be >= 1");
  if (config_.devices_per_round < 1 || config_.devices_per_round > num) {
    throw std::invalid_argument("devices_per_round must be in [1, " + std::to_string(num) + "]");
  }

  const double min_alpha = *std::min_element(scheme_.alphas.begin(), scheme_.alphas.end());
  for (std::uint64_t d = 0; d < num; ++d) {
    switch (config_.mode) {
      case Mode::kFairHet:
      case Mode::kFullTrn: alphas_.push_back(scheme_.alphas[d]); break;
      case Mode::kFairHom: alphas_.push_back(min_alpha); break;
      case Mode::kFedAvg: alphas_.push_back(1.0); break;
    }
  }

  // m_max is the largest hashed dimension any device needs.
  std::uint64_t m_max = 1;
  for (double alpha : alphas_) {
    if (alpha == 1.0) continue;
    const auto budget = static_cast<std::uint64_t>(std::floor(alpha * static_cast<double>(n_)));
    if (budget < 1) {
      throw std::invalid_argument("simulator: capacity " + std::to_string(alpha) +
                                  " leaves no parameters for n = " + std::to_string(n_));
    }
    m_max = std::max(m_max, floor_power_of_two(budget));
  }
  const FamilyOptions options{config_.sign_hash, true};
  const SubspaceFamily shared(n_, m_max, mix_seed(config_.seed, kFamilySalt), options);
  for (std::uint64_t d = 0; d < num; ++d) {
    if (config_.subspaces == SubspacePolicy::kConsistent) {
      subspaces_.push_back(shared.subspace_for_capacity(alphas_[d]));
    } else {
      const SubspaceFamily own(n_, m_max, mix_seed(mix_seed(config_.seed, kInconsistentSalt), d),
                               options);
      subspaces_.push_back(own.subspace_for_capacity(alphas_[d]));
    }
  }

  for (std::uint64_t d = 0; d < num; ++d) {
    if (config_.mode != Mode::kFullTrn || alphas_[d] == 1.0) eligible_.push_back(d);
  }
  if (eligible_.empty()) {
    throw std::invalid_argument("FULL-TRN needs at least one full-capacity (1x) device");
  }

  std::normal_distribution<double> normal(0.0, 1.0);
  std::mt19937_64 init_rng(mix_seed(config_.seed, kInitSalt));
  server_.theta.resize(n_);
  for (auto& v : server_.theta) v = config_.init_sd * normal(init_rng);
  std::mt19937_64 user_rng(mix_seed(config_.seed, kUserSalt));
  user_vecs_.resize(num * config_.dim);
  for (auto& v : user_vecs_) v = config_.init_sd * normal(user_rng);
  peaks_.assign(num, 0);
}

std::span<const double> Simulator::user_vector(std::uint64_t device) const {
  return std::span<const double>(user_vecs_).subspan(device * config_.dim, config_.dim);
}

ClientUpdate Simulator::train_device(std::uint64_t device, std::span<const double> psi,
                                     std::uint64_t round) {
  const auto dim = config_.dim;
  auto rng = device_rng(config_.seed, round, device);
  const auto& records = partition_.device_records[device];

  ClientUpdate update;
  update.device = device;
  update.samples = partition_.sample_counts[device];

  MemoryMeter meter;
  {
    ClientModel model(user_vector(device),
                      HashedEmbeddingTable(dataset_.num_items, dim, subspaces_[device], psi, &meter),
                      config_.sgd, &meter);
    double loss_sum = 0.0;
    auto train_on = [&](const Interaction& rec) {
      if (dataset_.kind == FeedbackKind::kImplicit) {
        const auto neg = sample_negatives(index_, device, 1, rng).front();
        loss_sum += model.bpr_step({rec.item, neg});
      } else {
        loss_sum += model.mse_step({rec.item, rec.rating});
      }
      ++update.steps;
    };

    if (!records.empty()) {
      if (config_.local_unit == LocalUnit::kEpochs) {
        std::vector<std::size_t> order(records.size());
        for (std::uint64_t e = 0; e < config_.local_epochs; ++e) {
          std::iota(order.begin(), order.end(), 0);
          std::shuffle(order.begin(), order.end(), rng);
          for (auto r : order) train_on(records[r]);
        }
      } else {
        std::uniform_int_distribution<std::size_t> pick(0, records.size() - 1);
        for (std::uint64_t s = 0; s < config_.local_epochs; ++s) train_on(records[pick(rng)]);
      }
    }
    update.mean_loss = update.steps > 0 ? loss_sum / static_cast<double>(update.steps) : 0.0;
    std::copy(model.user_vec().begin(), model.user_vec().end(),
              user_vecs_.begin() + static_cast<std::ptrdiff_t>(device * dim));
    const auto trained = model.items().psi();
    update.psi.assign(trained.begin(), trained.end());
  }
  peaks_[device] = meter.peak();
  return update;
}

RoundSummary Simulator::run_round(std::span<const std::uint64_t> sampled) {
  if (sampled.empty()) throw std::invalid_argument("run_round: no devices sampled");
  std::vector<std::uint64_t> devices(sampled.begin(), sampled.end());
  std::sort(devices.begin(), devices.end());
  if (std::adjacent_find(devices.begin(), devices.end()) != devices.end()) {
    throw std::invalid_argument("run_round: duplicate device in sample");
  }
  for (auto d : devices) {
    if (d >= num_devices()) throw std::out_of_range("run_round: unknown device " + std::to_string(d));
  }

  const auto round = server_.round + 1;
  std::vector<ClientUpdate> updates(devices.size());
  parallel_for(devices.size(), config_.threads, [&](std::size_t i) {
    const auto d = devices[i];
    const auto psi = subspaces_[d].reduce(server_.theta);
    updates[i] = train_device(d, psi, round);
  });

  std::vector<const Subspace*> spaces;
  double loss_sum = 0.0;
  std::uint64_t steps = 0;
  for (const auto& u : updates) {
    if (!all_finite(u.psi)) {
      throw DivergenceError(u.device, "device " + std::to_string(u.device) +
                                          " returned non-finite parameters in round " +
                                          std::to_string(round));
    }
    spaces.push_back(&subspaces_[u.device]);
    loss_sum += u.mean_loss * static_cast<double>(u.steps);
    steps += u.steps;
  }
  auto theta = aggregate_updates(updates, spaces, n_);
  if (!all_finite(theta)) {
    throw DivergenceError(devices.front(), "aggregated server parameters are non-finite in round " +
                                               std::to_string(round));
  }
  server_.theta = std::move(theta);
  server_.round = round;

  RoundSummary summary;
  summary.round = round;
  summary.sampled = std::move(devices);
  summary.mean_loss = steps > 0 ? loss_sum / static_cast<double>(steps) : 0.0;
  return summary;
}

RoundSummary Simulator::step() {
  const auto sampled =
      sample_devices(eligible_, config_.devices_per_round, config_.seed, server_.round + 1);
  return run_round(sampled);
}

EvalResult Simulator::evaluate() const {
  return evaluate_server(server_.theta, user_vecs_, config_.dim, dataset_, index_, config_.ndcg_k);
}

void Simulator::append(std::uint64_t round, const std::string& metric, double value) {
  log_.append({round, to_string(config_.mode), scheme_.spec, config_.seed, metric, value});
}

const MetricsLog& Simulator::run(std::uint64_t rounds) {
  for (std::uint64_t r = 1; r <= rounds; ++r) {
    const auto summary = step();
    append(summary.round, "train_loss", summary.mean_loss);
    if (summary.round % config_.eval_every == 0 || r == rounds) {
      const auto result = evaluate();
      append(summary.round, result.metric, result.value);
    }
  }
  return log_;
}

MetricsLog run_training(const RunConfig& config, const InteractionDataset& dataset,
                        const CapacityScheme& scheme) {
  config.validate(dataset.num_users);
  Simulator sim(config, dataset, scheme);
  return sim.run(config.rounds);
}

}  // namespace fair
