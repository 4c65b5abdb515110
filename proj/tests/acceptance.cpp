// Acceptance checks: one PASS/FAIL line per criterion. Tolerances and
// runtime limits are fixed below; a criterion fails if it misses either.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fair/fedsim.hpp"
#include "fair/quadratic.hpp"
#include "oracles.hpp"

namespace {

constexpr double kProjectionTol = 1e-10;
constexpr double kCollapseTol = 1e-12;
constexpr double kFedAvgTol = 1e-12;
constexpr double kSpectrumEps = 1e-8;
constexpr double kHalvingRatio = 1.5;
constexpr double kFinalGapFraction = 1e-4;
constexpr double kGradientRelTol = 1e-5;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c);
  return buf;
}

Eigen::VectorXd random_eigen(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Outcome projection_oracle() {
  std::mt19937_64 rng(101);
  const std::uint64_t dims[] = {2, 4, 8, 16};
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::uint64_t n = 16 + rng() % 49;  // 16..64
    const std::uint64_t m = dims[i % 4];
    const fair::SubspaceFamily family(n, 16, rng(), {i % 3 == 0, true});
    const auto s = family.with_dimension(m);
    const Eigen::VectorXd theta = random_eigen(static_cast<Eigen::Index>(n), rng);
    const Eigen::VectorXd expected = oracle::projection(oracle::dense_s(s), theta);
    const auto got = s.recover(s.reduce(to_std(theta)));
    for (std::uint64_t a = 0; a < n; ++a) {
      worst = std::max(worst, std::abs(got[a] - expected(static_cast<Eigen::Index>(a))));
    }
  }
  return {worst <= kProjectionTol, fmt("max elementwise error %.3g over 100 cases", worst)};
}

Outcome collapsibility() {
  std::mt19937_64 rng(202);
  double worst = 0.0;
  int pairs = 0;
  for (int f = 0; f < 50; ++f) {
    const std::uint64_t n = 8 + rng() % 121;  // 8..128
    const std::uint64_t m_max = fair::floor_power_of_two(n);
    const fair::SubspaceFamily family(n, m_max, rng(), {f % 2 == 1, true});
    for (std::uint64_t mi = 1; mi < m_max; mi *= 2) {
      const Eigen::MatrixXd si = oracle::dense_s(family.with_dimension(mi));
      for (std::uint64_t mj = mi * 2; mj <= m_max; mj *= 2) {
        const Eigen::MatrixXd sj = oracle::dense_s(family.with_dimension(mj));
        ++pairs;
        for (std::uint64_t k = 0; k < mi; ++k) {
          // The m_j / m_i columns of S_j congruent to k modulo m_i.
          Eigen::MatrixXd cols(sj.rows(), static_cast<Eigen::Index>(mj / mi));
          for (std::uint64_t r = 0; r < mj / mi; ++r) {
            cols.col(static_cast<Eigen::Index>(r)) = sj.col(static_cast<Eigen::Index>(k + r * mi));
          }
          const Eigen::VectorXd target = si.col(static_cast<Eigen::Index>(k));
          const Eigen::VectorXd coef = cols.completeOrthogonalDecomposition().solve(target);
          worst = std::max(worst, (cols * coef - target).norm());
        }
      }
    }
  }
  return {worst < kCollapseTol,
          fmt("max residual %.3g over %.0f (m_i, m_j) pairs in 50 families", worst, pairs)};
}

Outcome fedavg_coincidence() {
  fair::SynthParams sp;
  sp.num_users = 8;
  sp.num_items = 40;
  sp.density = 0.25;
  sp.seed = 303;
  const auto ds = fair::split_train_test(fair::synth_lowrank(sp), 2, 303);
  double worst = 0.0;
  for (auto mode : {fair::Mode::kFedAvg, fair::Mode::kFairHet}) {
    fair::RunConfig cfg;
    cfg.mode = mode;
    cfg.rounds = 20;
    cfg.devices_per_round = 4;
    cfg.local_epochs = 2;
    cfg.dim = 4;
    cfg.seed = 303;
    fair::Simulator sim(cfg, ds, fair::parse_capacity_scheme("1x", 8));
    oracle::DenseFedAvg ref(cfg, ds, sim.server().theta,
                            {sim.user_vectors().begin(), sim.user_vectors().end()});
    for (std::uint64_t r = 1; r <= 20; ++r) {
      const auto summary = sim.step();
      ref.round(r, summary.sampled);
      for (std::size_t a = 0; a < ref.theta.size(); ++a) {
        worst = std::max(worst, std::abs(ref.theta[a] - sim.server().theta[a]));
      }
    }
  }
  return {worst <= kFedAvgTol, fmt("max coordinate difference %.3g over 20 rounds, N=8", worst)};
}

Outcome spectrum_constants() {
  std::mt19937_64 rng(404);
  double worst_low = 0.0, worst_high = 0.0;  // how far outside [mu, L]
  for (int i = 0; i < 20; ++i) {
    const std::uint64_t n = 8 + rng() % 121;
    const auto problem = fair::make_quadratic_problem(n, 2 + rng() % 6, rng());
    const std::uint64_t m = fair::floor_power_of_two(n) >> (1 + i % 3);
    const auto s = fair::SubspaceFamily(n, m, rng(), {i % 2 == 0, true}).with_dimension(m);
    const Eigen::MatrixXd dense = oracle::dense_s(s);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index c = 0; c < dense.cols(); ++c) {
      if (dense.col(c).squaredNorm() > 0) keep.push_back(c);
    }
    Eigen::MatrixXd tilde(dense.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) {
      tilde.col(static_cast<Eigen::Index>(j)) = dense.col(keep[j]).normalized();
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> full(problem.hessian);
    const double mu = full.eigenvalues().minCoeff(), lip = full.eigenvalues().maxCoeff();
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> restricted(tilde.transpose() *
                                                                     problem.hessian * tilde);
    worst_low = std::max(worst_low, mu - restricted.eigenvalues().minCoeff());
    worst_high = std::max(worst_high, restricted.eigenvalues().maxCoeff() - lip);
  }
  return {worst_low <= kSpectrumEps && worst_high <= kSpectrumEps,
          fmt("largest excursion below mu %.3g, above L %.3g (20 instances)", worst_low,
              worst_high)};
}

Outcome convergence() {
  fair::QuadraticBenchParams params;
  params.n = 64;
  params.m = 16;
  params.rounds = 400;
  const auto r = fair::quadratic_bench(params);
  bool pass = true;
  std::string detail;
  for (std::uint64_t t : {100, 200, 400}) {
    const double ratio = r.gap_at(t) / r.gap_at(t / 2);
    pass = pass && ratio <= 1.0 / kHalvingRatio;
    detail += fmt("gap(%.0f)/gap(%.0f)=%.3f ", static_cast<double>(t), static_cast<double>(t / 2), ratio);
  }
  const double final_fraction = r.gap_at(400) / r.gap_at(1);
  pass = pass && final_fraction < kFinalGapFraction;
  detail += fmt("gap(400)/gap(1)=%.3g", final_fraction);
  return {pass, detail};
}

// Loss at theta = S psi computed from dense S, independent of the model code.
double dense_loss(const Eigen::MatrixXd& s, const std::vector<double>& psi,
                  const std::vector<double>& user, std::uint64_t dim, bool implicit,
                  std::uint64_t pos, std::uint64_t neg, double rating, double l2) {
  const Eigen::VectorXd theta =
      s * Eigen::Map<const Eigen::VectorXd>(psi.data(), static_cast<Eigen::Index>(psi.size()));
  auto score = [&](std::uint64_t item) {
    double z = 0.0;
    for (std::uint64_t t = 0; t < dim; ++t) z += user[t] * theta(static_cast<Eigen::Index>(item * dim + t));
    return z;
  };
  if (!implicit) return (score(pos) - rating) * (score(pos) - rating);
  double reg = 0.0;
  for (std::uint64_t t = 0; t < dim; ++t) {
    const double p = theta(static_cast<Eigen::Index>(pos * dim + t));
    const double q = theta(static_cast<Eigen::Index>(neg * dim + t));
    reg += user[t] * user[t] + p * p + q * q;
  }
  return oracle::neg_log_sigmoid(score(pos) - score(neg)) + l2 * reg;
}

Outcome gradients() {
  std::mt19937_64 rng(606);
  std::normal_distribution<double> normal;
  constexpr double h = 1e-6;
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const std::uint64_t items = 3 + rng() % 6, dim = 2 + rng() % 3;
    const std::uint64_t m = fair::floor_power_of_two(items * dim) / 2;
    const auto s = fair::SubspaceFamily(items * dim, m, rng(), {i % 2 == 0, true}).with_dimension(m);
    const Eigen::MatrixXd dense = oracle::dense_s(s);
    std::vector<double> psi(m), user(dim);
    for (auto& x : psi) x = normal(rng);
    for (auto& x : user) x = normal(rng);
    const double l2 = 1e-3, rating = normal(rng);
    const bool implicit = i % 2 == 0;
    const std::uint64_t pos = rng() % items, neg = (pos + 1 + rng() % (items - 1)) % items;

    fair::ClientModel model(user, fair::HashedEmbeddingTable(items, dim, s, psi), {1.0, l2});
    if (implicit) {
      model.bpr_step({pos, neg});
    } else {
      model.mse_step({pos, rating});
    }
    double err = 0.0, norm = 0.0;
    for (std::uint64_t j = 0; j < m; ++j) {
      auto hi = psi, lo = psi;
      hi[j] += h;
      lo[j] -= h;
      const double fd = (dense_loss(dense, hi, user, dim, implicit, pos, neg, rating, l2) -
                         dense_loss(dense, lo, user, dim, implicit, pos, neg, rating, l2)) /
                        (2 * h);
      const double analytic = psi[j] - model.items().psi()[j];  // lr = 1
      err += (fd - analytic) * (fd - analytic);
      norm += fd * fd;
    }
    worst = std::max(worst, std::sqrt(err) / std::max(std::sqrt(norm), 1e-12));
  }
  return {worst < kGradientRelTol, fmt("max relative error %.3g over 50 BPR/MSE instances", worst)};
}

// Fixed trend protocol: synthetic implicit data, seeds 1..3, final ndcg@20.
double trend_run(std::uint64_t items, const std::string& scheme, fair::Mode mode,
                 fair::SubspacePolicy policy, std::uint64_t seed) {
  fair::SynthParams sp;
  sp.num_users = 100;
  sp.num_items = items;
  sp.latent_dim = 8;
  sp.density = 0.2;
  sp.seed = seed;
  const auto ds = fair::split_train_test(fair::synth_lowrank(sp), 20, seed);
  fair::RunConfig cfg;
  cfg.mode = mode;
  cfg.subspaces = policy;
  cfg.rounds = 200;
  cfg.devices_per_round = 50;
  cfg.local_epochs = 5;
  cfg.dim = 8;
  cfg.sgd.learning_rate = 0.3;
  cfg.init_sd = 0.1;
  cfg.seed = seed;
  cfg.eval_every = cfg.rounds;
  cfg.ndcg_k = 20;
  cfg.threads = 0;
  return fair::run_training(cfg, ds, fair::parse_capacity_scheme(scheme, 100)).last("ndcg@20");
}

Outcome trends() {
  using fair::Mode;
  using fair::SubspacePolicy;
  double v[6] = {0, 0, 0, 0, 0, 0};
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    v[0] += trend_run(500, "1x-4x", Mode::kFairHet, SubspacePolicy::kConsistent, seed) / 3;
    v[1] += trend_run(500, "1x-4x", Mode::kFairHom, SubspacePolicy::kConsistent, seed) / 3;
    v[2] += trend_run(500, "1x-2x-2x-2x-2x", Mode::kFairHet, SubspacePolicy::kConsistent, seed) / 3;
    v[3] += trend_run(500, "1x-2x-2x-2x-2x", Mode::kFullTrn, SubspacePolicy::kConsistent, seed) / 3;
    // 512 items x dim 8 = 4096 virtual parameters; 64x gives m = 64.
    v[4] += trend_run(512, "64x", Mode::kFairHet, SubspacePolicy::kConsistent, seed) / 3;
    v[5] += trend_run(512, "64x", Mode::kFairHet, SubspacePolicy::kInconsistent, seed) / 3;
  }
  const bool a = v[0] > v[1], b = v[2] > v[3], c = v[4] > v[5];
  std::string detail = fmt("(a) HET %.4f vs HOM %.4f", v[0], v[1]) + (a ? "" : " [miss]") +
                       fmt("; (b) HET %.4f vs FULL-TRN %.4f", v[2], v[3]) + (b ? "" : " [miss]") +
                       fmt("; (c) consistent %.4f vs inconsistent %.4f", v[4], v[5]) +
                       (c ? "" : " [miss]");
  return {a && b && c, detail};
}

Outcome memory_contract() {
  fair::SynthParams sp;
  sp.num_users = 16;
  sp.num_items = 64;
  sp.density = 0.2;
  sp.seed = 808;
  const auto ds = fair::split_train_test(fair::synth_lowrank(sp), 2, 808);
  fair::RunConfig cfg;
  cfg.rounds = 3;
  cfg.devices_per_round = 16;
  cfg.dim = 8;
  cfg.seed = 808;
  const auto scheme = fair::parse_capacity_scheme("1x-2x-4x-8x-16x-32x-64x-128x", 16);
  fair::Simulator sim(cfg, ds, scheme);
  const std::uint64_t batch = fair::ClientModel::kRowsPerStep;
  bool pass = true;
  double worst_slack = 1e300;
  for (int r = 0; r < 3; ++r) {
    sim.step();
    for (std::uint64_t d = 0; d < 16; ++d) {
      const std::uint64_t c = scheme.factors[d];
      const std::uint64_t bound = (sim.n() + c - 1) / c + batch * cfg.dim + cfg.dim;
      const std::uint64_t peak = sim.last_peak_parameters(d);
      pass = pass && peak > 0 && peak <= bound;
      worst_slack = std::min(worst_slack, static_cast<double>(bound) - static_cast<double>(peak));
    }
  }
  return {pass, fmt("n=%.0f, factors 1..128, min(bound - peak) = %.0f values", sim.n(), worst_slack)};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double limit_seconds;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "projection oracle", 5, projection_oracle},
      {2, "collapsibility", 5, collapsibility},
      {3, "FedAvg coincidence", 10, fedavg_coincidence},
      {4, "restricted spectrum constants", 10, spectrum_constants},
      {5, "O(1/T) convergence", 30, convergence},
      {6, "gradient correctness", 5, gradients},
      {7, "trend reproduction", 600, trends},
      {8, "memory contract", 5, memory_contract},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < c.limit_seconds;
    const bool pass = o.pass && in_time;
    failures += pass ? 0 : 1;
    std::printf("criterion %d %-30s %s  %s  [%.2f s, limit %.0f s%s]\n", c.id, c.name,
                pass ? "PASS" : "FAIL", o.detail.c_str(), secs, c.limit_seconds,
                in_time ? "" : ", too slow");
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
