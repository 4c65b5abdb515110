#include "fair/quadratic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>

namespace fair {
namespace {

constexpr std::uint64_t kProblemSalt = 0x9d1;
constexpr std::uint64_t kFamilySalt = 0x9d2;
constexpr std::uint64_t kStartSalt = 0x9d3;

Eigen::MatrixXd gaussian(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd out(rows, cols);
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, j) = normal(rng);
  }
  return out;
}

std::pair<double, double> extreme_eigenvalues(const Eigen::MatrixXd& sym) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw std::runtime_error("eigen solver failed");
  const auto& ev = solver.eigenvalues();
  return {ev.minCoeff(), ev.maxCoeff()};
}

/// Dense S with empty columns removed.
Eigen::MatrixXd nonempty_columns(const Subspace& s) {
  const Eigen::MatrixXd dense = s.dense_matrix();
  const auto counts = s.bucket_counts();
  std::vector<Eigen::Index> keep;
  for (std::size_t j = 0; j < counts.size(); ++j) {
    if (counts[j] > 0) keep.push_back(static_cast<Eigen::Index>(j));
  }
  Eigen::MatrixXd out(dense.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) {
    out.col(static_cast<Eigen::Index>(c)) = dense.col(keep[c]);
  }
  return out;
}

std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace

double QuadraticProblem::objective(const Eigen::VectorXd& x) const {
  return 0.5 * x.dot(hessian * x) - linear.dot(x) + constant;
}

QuadraticProblem make_quadratic_problem(std::vector<Eigen::MatrixXd> a,
                                        std::vector<Eigen::VectorXd> b,
                                        std::vector<double> weights) {
  if (a.empty() || a.size() != b.size() || a.size() != weights.size()) {
    throw std::invalid_argument("quadratic problem: need matching non-empty A, b, weights");
  }
  const auto n = a.front().cols();
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].cols() != n || a[i].rows() != b[i].size()) {
      throw std::invalid_argument("quadratic problem: inconsistent shapes for device " +
                                  std::to_string(i));
    }
    if (!(weights[i] > 0.0)) throw std::invalid_argument("quadratic problem: weights must be > 0");
    total += weights[i];
  }
  QuadraticProblem q;
  q.hessian = Eigen::MatrixXd::Zero(n, n);
  q.linear = Eigen::VectorXd::Zero(n);
  for (std::size_t i = 0; i < a.size(); ++i) {
    weights[i] /= total;
    q.hessian += weights[i] * (a[i].transpose() * a[i]);
    q.linear += weights[i] * (a[i].transpose() * b[i]);
    q.constant += 0.5 * weights[i] * b[i].squaredNorm();
  }
  std::tie(q.mu, q.lipschitz) = extreme_eigenvalues(q.hessian);
  if (!(q.mu > 1e-10 * std::max(1.0, q.lipschitz))) {
    throw std::invalid_argument("quadratic problem: aggregate Hessian is singular (mu = " +
                                std::to_string(q.mu) + ")");
  }
  q.a = std::move(a);
  q.b = std::move(b);
  q.weights = std::move(weights);
  return q;
}

QuadraticProblem make_quadratic_problem(std::size_t n, std::size_t num_devices,
                                        std::uint64_t seed, double condition,
                                        double heterogeneity) {
  if (n == 0 || num_devices == 0) {
    throw std::invalid_argument("quadratic problem: n and num_devices must be >= 1");
  }
  if (!(condition >= 1.0)) throw std::invalid_argument("quadratic problem: condition must be >= 1");
  std::mt19937_64 rng(mix_seed(seed, kProblemSalt));
  std::uniform_real_distribution<double> spectrum(1.0, condition);
  std::uniform_int_distribution<int> samples(1, 10);
  const Eigen::VectorXd x_true = gaussian(n, 1, rng);

  std::vector<Eigen::MatrixXd> a;
  std::vector<Eigen::VectorXd> b;
  std::vector<double> weights;
  for (std::size_t i = 0; i < num_devices; ++i) {
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(gaussian(n, n, rng)).householderQ();
    Eigen::VectorXd root(n);
    for (Eigen::Index k = 0; k < root.size(); ++k) root(k) = std::sqrt(spectrum(rng));
    Eigen::MatrixXd ai = root.asDiagonal() * q.transpose();
    Eigen::VectorXd bi = ai * x_true;
    if (heterogeneity > 0.0) bi += heterogeneity * Eigen::VectorXd(gaussian(n, 1, rng));
    a.push_back(std::move(ai));
    b.push_back(std::move(bi));
    weights.push_back(samples(rng));
  }
  return make_quadratic_problem(std::move(a), std::move(b), std::move(weights));
}

Eigen::MatrixXd orthonormal_basis(const Subspace& s) {
  Eigen::MatrixXd basis = nonempty_columns(s);
  for (Eigen::Index j = 0; j < basis.cols(); ++j) basis.col(j).normalize();
  return basis;
}

SpectrumCheck check_restricted_spectrum(const QuadraticProblem& problem, const Subspace& s,
                                        double eps, bool* all_devices_pass) {
  const Eigen::MatrixXd basis = orthonormal_basis(s);
  SpectrumCheck check;
  check.mu = problem.mu;
  check.lipschitz = problem.lipschitz;
  std::tie(check.restricted_min, check.restricted_max) =
      extreme_eigenvalues(basis.transpose() * problem.hessian * basis);
  check.pass = check.restricted_min >= check.mu - eps && check.restricted_max <= check.lipschitz + eps;

  if (all_devices_pass != nullptr) {
    bool ok = check.pass;
    for (const auto& ai : problem.a) {
      const Eigen::MatrixXd hi = ai.transpose() * ai;
      const auto [mu_i, l_i] = extreme_eigenvalues(hi);
      const auto [lo, hi_ev] = extreme_eigenvalues(basis.transpose() * hi * basis);
      ok = ok && lo >= mu_i - eps && hi_ev <= l_i + eps;
    }
    *all_devices_pass = ok;
  }
  return check;
}

ConvergenceReport quadratic_bench(const QuadraticBenchParams& params) {
  const auto n = params.n;
  const auto m = params.m;
  if (n == 0 || n > 256) throw std::invalid_argument("quadratic bench: n must be in [1, 256]");
  if (m == 0 || m > n || (m != n && !is_power_of_two(m))) {
    throw std::invalid_argument("quadratic bench: m must be a power of two <= n, or equal to n");
  }
  if (params.rounds == 0) throw std::invalid_argument("quadratic bench: rounds must be >= 1");
  if (params.local_steps == 0) throw std::invalid_argument("quadratic bench: local_steps must be >= 1");
  if (params.num_devices == 0) throw std::invalid_argument("quadratic bench: need >= 1 device");
  if (!(params.step_scale > 0.0)) throw std::invalid_argument("quadratic bench: step_scale must be > 0");

  const QuadraticProblem problem = make_quadratic_problem(
      n, params.num_devices, params.seed, params.condition, params.heterogeneity);
  const SubspaceFamily family(n, m == n ? floor_power_of_two(n) : m,
                              mix_seed(params.seed, kFamilySalt));
  const Subspace s = (m == n) ? family.identity() : family.with_dimension(m);

  ConvergenceReport report;
  report.params = params;
  report.spectrum = check_restricted_spectrum(problem, s, 1e-8, &report.spectrum_all_devices);

  // Closed-form optimum over col-space(S) and over R^n.
  const Eigen::MatrixXd basis = nonempty_columns(s);
  const Eigen::MatrixXd reduced = basis.transpose() * problem.hessian * basis;
  const Eigen::VectorXd coords = reduced.ldlt().solve(basis.transpose() * problem.linear);
  report.optimum_sub = problem.objective(basis * coords);
  report.optimum_full = problem.objective(problem.hessian.ldlt().solve(problem.linear));

  // Step schedule from the device Hessians in the psi basis.
  double mu_psi = std::numeric_limits<double>::infinity();
  double l_psi = 0.0;
  for (const auto& ai : problem.a) {
    const Eigen::MatrixXd as = ai * basis;
    const auto [lo, hi] = extreme_eigenvalues(as.transpose() * as);
    mu_psi = std::min(mu_psi, lo);
    l_psi = std::max(l_psi, hi);
  }
  const double beta = params.step_scale / mu_psi;
  const double gamma = std::max(params.step_scale * l_psi / mu_psi,
                                static_cast<double>(params.local_steps));

  std::mt19937_64 rng(mix_seed(params.seed, kStartSalt));
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd theta(n);
  for (Eigen::Index k = 0; k < theta.size(); ++k) theta(k) = normal(rng);

  report.gaps.reserve(params.rounds + 1);
  report.gaps.push_back(problem.objective(theta) - report.optimum_sub);
  std::uint64_t step = 0;
  std::vector<double> grad(s.m());
  for (std::uint64_t t = 1; t <= params.rounds; ++t) {
    const auto start = s.reduce(as_span(theta));
    Eigen::VectorXd next = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < problem.a.size(); ++i) {
      std::vector<double> psi = start;
      for (std::uint64_t e = 0; e < params.local_steps; ++e) {
        const double eta = beta / (static_cast<double>(step + e) + gamma);
        const auto x = s.recover(psi);
        const Eigen::VectorXd residual =
            problem.a[i] * Eigen::Map<const Eigen::VectorXd>(x.data(), n) - problem.b[i];
        const Eigen::VectorXd grad_x = problem.a[i].transpose() * residual;
        std::fill(grad.begin(), grad.end(), 0.0);
        s.scatter_grad(0, as_span(grad_x), grad);
        for (std::size_t j = 0; j < psi.size(); ++j) psi[j] -= eta * grad[j];
      }
      const auto xi = s.recover(psi);
      next += problem.weights[i] * Eigen::Map<const Eigen::VectorXd>(xi.data(), n);
    }
    step += params.local_steps;
    theta = std::move(next);
    report.gaps.push_back(problem.objective(theta) - report.optimum_sub);
  }

  for (auto r : {params.rounds / 4, params.rounds / 2, params.rounds}) {
    if (r == 0) continue;
    if (!report.checkpoints.empty() && report.checkpoints.back().round == r) continue;
    report.checkpoints.push_back({r, report.gaps[r]});
  }
  report.monotone = true;
  for (std::size_t c = 1; c < report.checkpoints.size(); ++c) {
    if (!(report.checkpoints[c].gap < report.checkpoints[c - 1].gap)) report.monotone = false;
  }
  return report;
}

}  // namespace fair
