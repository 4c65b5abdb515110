#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include "fair/cli.hpp"

namespace fair {
namespace {

std::string fmt(const char* pattern, double value) {
  char buf[96];
  std::snprintf(buf, sizeof buf, pattern, value);
  return buf;
}

SuiteResult projection_suite(const VerifyOptions&) {
  constexpr int kCases = 100;
  constexpr double kTol = 1e-10;
  std::mt19937_64 rng(0x701);
  double worst = 0.0;
  for (int c = 0; c < kCases; ++c) {
    const std::uint64_t m = std::uint64_t{2} << (c % 4);  // 2, 4, 8, 16
    const auto n = std::uniform_int_distribution<std::uint64_t>(std::max<std::uint64_t>(m, 3), 64)(rng);
    const SubspaceFamily family(n, m, rng(), FamilyOptions{c % 2 == 1, true});
    const auto s = family.with_dimension(m);
    Eigen::VectorXd theta(static_cast<Eigen::Index>(n));
    std::normal_distribution<double> normal;
    for (auto& v : theta) v = normal(rng);

    const auto fast = s.recover(s.reduce(std::span<const double>(theta.data(), n)));
    const Eigen::MatrixXd dense = s.dense_matrix();
    const Eigen::MatrixXd gram_pinv =
        (dense.transpose() * dense).completeOrthogonalDecomposition().pseudoInverse();
    const Eigen::VectorXd oracle = dense * (gram_pinv * (dense.transpose() * theta));
    for (std::uint64_t a = 0; a < n; ++a) {
      worst = std::max(worst, std::abs(fast[a] - oracle(static_cast<Eigen::Index>(a))));
    }
  }
  return {"", worst <= kTol, std::to_string(kCases) + " cases, max |diff| " + fmt("%.3g", worst)};
}

SuiteResult collapsibility_suite(const VerifyOptions& options) {
  constexpr int kFamilies = 50;
  constexpr double kTol = 1e-12;
  std::mt19937_64 rng(0x702);
  double worst = 0.0;
  int pairs = 0;
  for (int f = 0; f < kFamilies; ++f) {
    const auto n = std::uniform_int_distribution<std::uint64_t>(4, 128)(rng);
    const auto m_max = floor_power_of_two(n);
    const FamilyOptions opts{f % 2 == 1, true};
    const SubspaceFamily family(n, m_max, rng(), opts);
    const SubspaceFamily unrelated(n, m_max, rng(), opts);
    for (std::uint64_t mi = 1; mi < m_max; mi *= 2) {
      const auto si = (options.corrupt_bucket_map ? unrelated : family).with_dimension(mi);
      const Eigen::MatrixXd di = si.dense_matrix();
      for (std::uint64_t mj = mi * 2; mj <= m_max; mj *= 2) {
        const Eigen::MatrixXd dj = family.with_dimension(mj).dense_matrix();
        ++pairs;
        for (std::uint64_t k = 0; k < mi; ++k) {
          // Column k of S_i must lie in the span of columns k + t*mi of S_j.
          const auto count = static_cast<Eigen::Index>(mj / mi);
          Eigen::MatrixXd sub(dj.rows(), count);
          for (Eigen::Index t = 0; t < count; ++t) {
            sub.col(t) = dj.col(static_cast<Eigen::Index>(k) + t * static_cast<Eigen::Index>(mi));
          }
          const Eigen::VectorXd col = di.col(static_cast<Eigen::Index>(k));
          const Eigen::VectorXd x = sub.completeOrthogonalDecomposition().solve(col);
          worst = std::max(worst, (sub * x - col).cwiseAbs().maxCoeff());
        }
      }
    }
  }
  return {"", worst < kTol,
          std::to_string(kFamilies) + " families, " + std::to_string(pairs) +
              " pairs, max residual " + fmt("%.3g", worst)};
}

SuiteResult spectrum_suite(const VerifyOptions&) {
  constexpr int kInstances = 20;
  std::mt19937_64 rng(0x703);
  int passed = 0;
  double worst_excess = 0.0;
  for (int i = 0; i < kInstances; ++i) {
    const auto n = std::uniform_int_distribution<std::uint64_t>(8, 128)(rng);
    const auto devices = std::uniform_int_distribution<std::uint64_t>(2, 8)(rng);
    const auto problem = make_quadratic_problem(n, devices, rng());
    const auto m = floor_power_of_two(n) / 2;
    const SubspaceFamily family(n, m, rng());
    bool all_devices = false;
    const auto check = check_restricted_spectrum(problem, family.with_dimension(m), 1e-8,
                                                 &all_devices);
    passed += (check.pass && all_devices) ? 1 : 0;
    worst_excess = std::max({worst_excess, check.mu - check.restricted_min,
                             check.restricted_max - check.lipschitz});
  }
  return {"", passed == kInstances,
          std::to_string(passed) + "/" + std::to_string(kInstances) +
              " instances inside [mu, L], worst excess " + fmt("%.3g", worst_excess)};
}

// Dense GMF training that mirrors the simulator's sampling and update order.
struct DenseFedAvg {
  std::uint64_t dim;
  SgdParams sgd;
  std::vector<double> theta;
  std::vector<double> users;

  static double dot(const double* x, const double* y, std::uint64_t d) {
    return std::inner_product(x, x + d, y, 0.0);
  }

  void bpr(double* u, std::vector<double>& table, std::uint64_t pos, std::uint64_t neg) const {
    double* p = table.data() + pos * dim;
    double* q = table.data() + neg * dim;
    const double margin = dot(u, p, dim) - dot(u, q, dim);
    const double coeff = sigmoid(-margin);
    const double lr = sgd.learning_rate;
    const double two_l2 = 2.0 * sgd.l2;
    for (std::uint64_t t = 0; t < dim; ++t) {
      const double ut = u[t], pt = p[t], qt = q[t];
      u[t] = ut - lr * (-coeff * (pt - qt) + two_l2 * ut);
      p[t] = pt + -lr * (-coeff * ut + two_l2 * pt);
      q[t] = qt + -lr * (coeff * ut + two_l2 * qt);
    }
  }
};

SuiteResult fedavg_suite(const VerifyOptions&) {
  constexpr std::uint64_t kRounds = 20;
  constexpr double kTol = 1e-12;
  SynthParams synth;
  synth.num_users = 8;
  synth.num_items = 40;
  synth.density = 0.25;
  synth.seed = 0x704;
  const auto ds = split_train_test(synth_lowrank(synth), 2, 7);

  RunConfig cfg;
  cfg.mode = Mode::kFedAvg;
  cfg.devices_per_round = 4;
  cfg.local_epochs = 2;
  cfg.dim = 4;
  cfg.seed = 11;
  Simulator sim(cfg, ds, parse_capacity_scheme("1x-4x", synth.num_users));

  DenseFedAvg ref{cfg.dim, cfg.sgd, sim.server().theta,
                  std::vector<double>(sim.user_vectors().begin(), sim.user_vectors().end())};
  const auto partition = partition_by_user(ds);
  const UserIndex index(ds);
  std::vector<std::uint64_t> everyone(synth.num_users);
  std::iota(everyone.begin(), everyone.end(), 0);

  double worst = 0.0;
  for (std::uint64_t round = 1; round <= kRounds; ++round) {
    const auto sampled = sample_devices(everyone, cfg.devices_per_round, cfg.seed, round);
    double total = 0.0;
    for (auto d : sampled) total += static_cast<double>(partition.sample_counts[d]);
    std::vector<double> next(ref.theta.size(), 0.0);
    for (auto d : sampled) {
      auto table = ref.theta;
      double* u = ref.users.data() + d * cfg.dim;
      auto rng = device_rng(cfg.seed, round, d);
      const auto& records = partition.device_records[d];
      std::vector<std::size_t> order(records.size());
      for (std::uint64_t e = 0; e < cfg.local_epochs; ++e) {
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        for (auto r : order) {
          const auto neg = sample_negatives(index, d, 1, rng).front();
          ref.bpr(u, table, records[r].item, neg);
        }
      }
      const double p = static_cast<double>(partition.sample_counts[d]) / total;
      for (std::size_t a = 0; a < next.size(); ++a) next[a] += p * (1.0 * table[a]);
    }
    ref.theta = std::move(next);
    sim.step();
    for (std::size_t a = 0; a < ref.theta.size(); ++a) {
      worst = std::max(worst, std::abs(ref.theta[a] - sim.server().theta[a]));
    }
    for (std::size_t a = 0; a < ref.users.size(); ++a) {
      worst = std::max(worst, std::abs(ref.users[a] - sim.user_vectors()[a]));
    }
  }
  return {"", worst <= kTol,
          std::to_string(kRounds) + " rounds, max |diff| " + fmt("%.3g", worst)};
}

SuiteResult gradient_suite(const VerifyOptions&) {
  constexpr int kInstances = 50;
  constexpr double kTol = 1e-5;
  constexpr double kStep = 1e-6;
  std::mt19937_64 rng(0x705);
  std::normal_distribution<double> normal(0.0, 0.5);
  double worst = 0.0;
  for (int i = 0; i < kInstances; ++i) {
    const auto items = std::uniform_int_distribution<std::uint64_t>(3, 10)(rng);
    const auto dim = std::uniform_int_distribution<std::uint64_t>(2, 4)(rng);
    const auto n = items * dim;
    const auto m = floor_power_of_two(n) / 2;
    const SubspaceFamily family(n, m, rng(), FamilyOptions{i % 2 == 1, true});
    std::vector<double> psi(m), user(dim);
    for (auto& v : psi) v = normal(rng);
    for (auto& v : user) v = normal(rng);
    const SgdParams sgd{1.0, 1e-3};
    const bool implicit = i % 2 == 0;
    std::uniform_int_distribution<std::uint64_t> pick(0, items - 1);
    const auto pos = pick(rng);
    auto neg = pick(rng);
    if (neg == pos) neg = (pos + 1) % items;
    const double rating = normal(rng);

    auto loss_at = [&](const std::vector<double>& p, const std::vector<double>& u) {
      const ClientModel model(u, HashedEmbeddingTable(items, dim, family.with_dimension(m), p),
                              sgd);
      return implicit ? model.bpr_loss({pos, neg}) : model.mse_loss({pos, rating});
    };

    // With lr = 1 a step moves every parameter by exactly minus its gradient.
    ClientModel model(user, HashedEmbeddingTable(items, dim, family.with_dimension(m), psi), sgd);
    implicit ? model.bpr_step({pos, neg}) : model.mse_step({pos, rating});
    std::vector<double> analytic, numeric;
    for (std::uint64_t j = 0; j < m; ++j) {
      analytic.push_back(psi[j] - model.items().psi()[j]);
      auto hi = psi, lo = psi;
      hi[j] += kStep;
      lo[j] -= kStep;
      numeric.push_back((loss_at(hi, user) - loss_at(lo, user)) / (2 * kStep));
    }
    for (std::uint64_t t = 0; t < dim; ++t) {
      analytic.push_back(user[t] - model.user_vec()[t]);
      auto hi = user, lo = user;
      hi[t] += kStep;
      lo[t] -= kStep;
      numeric.push_back((loss_at(psi, hi) - loss_at(psi, lo)) / (2 * kStep));
    }
    double diff = 0.0, scale = 0.0;
    for (std::size_t k = 0; k < analytic.size(); ++k) {
      diff += (analytic[k] - numeric[k]) * (analytic[k] - numeric[k]);
      scale = std::max(scale, std::abs(numeric[k]));
    }
    worst = std::max(worst, std::sqrt(diff) / std::max(scale, 1e-8));
  }
  return {"", worst < kTol,
          std::to_string(kInstances) + " instances, max relative error " + fmt("%.3g", worst)};
}

SuiteResult memory_suite(const VerifyOptions&) {
  SynthParams synth;
  synth.num_users = 16;
  synth.num_items = 64;
  synth.density = 0.2;
  synth.seed = 0x706;
  const auto ds = split_train_test(synth_lowrank(synth), 2, 3);
  RunConfig cfg;
  cfg.dim = 4;
  cfg.devices_per_round = synth.num_users;
  const auto scheme = parse_capacity_scheme("1x-2x-4x-8x-16x-32x-64x-128x", synth.num_users);
  Simulator sim(cfg, ds, scheme);
  std::vector<std::uint64_t> all(synth.num_users);
  std::iota(all.begin(), all.end(), 0);
  sim.run_round(all);
  int violations = 0;
  double tightest = 0.0;
  for (auto d : all) {
    const auto c = scheme.factors[d];
    const auto bound = (sim.n() + c - 1) / c + ClientModel::kRowsPerStep * cfg.dim + cfg.dim;
    const auto peak = sim.last_peak_parameters(d);
    if (peak == 0 || peak > bound) ++violations;
    tightest = std::max(tightest, static_cast<double>(peak) / static_cast<double>(bound));
  }
  return {"", violations == 0,
          std::to_string(all.size()) + " devices, max peak/bound " + fmt("%.3f", tightest)};
}

SuiteResult convergence_suite(const VerifyOptions&) {
  const auto report = quadratic_bench(QuadraticBenchParams{});
  bool ok = report.gap_at(400) < 1e-4 * report.gap_at(1);
  double worst_ratio = 0.0;
  for (std::uint64_t t : {100, 200, 400}) {
    const double ratio = report.gap_at(t) / report.gap_at(t / 2);
    worst_ratio = std::max(worst_ratio, ratio);
    ok = ok && ratio <= 1.0 / 1.5;
  }
  return {"", ok,
          "worst gap(T)/gap(T/2) " + fmt("%.3f", worst_ratio) + ", gap(400)/gap(1) " +
              fmt("%.3g", report.gap_at(400) / report.gap_at(1))};
}

}  // namespace

const std::vector<VerifySuite>& verify_suites() {
  static const std::vector<VerifySuite> suites = {
      {"projection", "recover(reduce(theta)) equals the dense least-squares projection",
       projection_suite},
      {"collapsibility", "smaller subspaces are spanned by the folded columns of larger ones",
       collapsibility_suite},
      {"spectrum", "restricted Hessian eigenvalues stay inside [mu, L]", spectrum_suite},
      {"fedavg", "all-full-capacity runs match dense federated averaging", fedavg_suite},
      {"gradients", "BPR and MSE steps match central finite differences", gradient_suite},
      {"memory", "device parameter storage stays under the compressed budget", memory_suite},
      {"convergence", "quadratic gap shrinks like 1/T", convergence_suite},
  };
  return suites;
}

int cmd_verify(bool list_only, const VerifyOptions& options, std::ostream& out,
               std::ostream& err) {
  const auto& suites = verify_suites();
  if (list_only) {
    for (const auto& s : suites) out << s.name << "  " << s.description << "\n";
    return 0;
  }
  std::string first_failure;
  for (const auto& s : suites) {
    const auto start = std::chrono::steady_clock::now();
    SuiteResult result;
    try {
      result = s.run(options);
    } catch (const std::exception& e) {
      result = {"", false, std::string("threw: ") + e.what()};
    }
    result.name = s.name;
    result.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out << (result.pass ? "PASS  " : "FAIL  ") << result.name << "  (" << result.detail << ", "
        << fmt("%.2f", result.seconds) << " s)\n";
    if (!result.pass && first_failure.empty()) first_failure = result.name;
  }
  if (!first_failure.empty()) {
    err << "verify failed: first failing suite is " << first_failure << "\n";
    return 1;
  }
  out << "all " << suites.size() << " suites passed\n";
  return 0;
}

}  // namespace fair
