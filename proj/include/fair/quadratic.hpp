#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "fair/subspace.hpp"

namespace fair {

/// Per-device strongly convex quadratics F_i(x) = 1/2 |A_i x - b_i|^2 with
/// aggregation weights p_i. H = sum p_i A_i^T A_i has extreme eigenvalues
/// mu (> 0) and L.
struct QuadraticProblem {
  std::vector<Eigen::MatrixXd> a;
  std::vector<Eigen::VectorXd> b;
  std::vector<double> weights;
  Eigen::MatrixXd hessian;    // H
  Eigen::VectorXd linear;     // g = sum p_i A_i^T b_i
  double constant = 0.0;      // 1/2 sum p_i |b_i|^2
  double mu = 0.0;
  double lipschitz = 0.0;

  std::size_t n() const { return static_cast<std::size_t>(hessian.rows()); }
  double objective(const Eigen::VectorXd& x) const;
};

/// A_i = diag(sqrt(lambda)) Q_i^T with random orthogonal Q_i and lambda drawn
/// uniformly from [1, condition]. b_i = A_i x_true + heterogeneity * noise.
/// Throws if the aggregate Hessian is (numerically) singular.
QuadraticProblem make_quadratic_problem(std::size_t n, std::size_t num_devices,
                                        std::uint64_t seed, double condition = 10.0,
                                        double heterogeneity = 0.0);

/// Builds a problem from explicit factors (validates shapes and definiteness).
QuadraticProblem make_quadratic_problem(std::vector<Eigen::MatrixXd> a,
                                        std::vector<Eigen::VectorXd> b,
                                        std::vector<double> weights);

struct SpectrumCheck {
  double restricted_min = 0.0;  // extreme eigenvalues of S~^T H S~
  double restricted_max = 0.0;
  double mu = 0.0;
  double lipschitz = 0.0;
  bool pass = false;
};

/// S~ is S with its non-empty columns scaled to unit norm. Checks
/// eig(S~^T H S~) within [mu - eps, L + eps] for the aggregate Hessian and
/// for every device Hessian; the returned record is for the aggregate.
SpectrumCheck check_restricted_spectrum(const QuadraticProblem& problem, const Subspace& s,
                                        double eps = 1e-8, bool* all_devices_pass = nullptr);

/// Orthonormal basis of col-space(S) (empty columns dropped).
Eigen::MatrixXd orthonormal_basis(const Subspace& s);

struct QuadraticBenchParams {
  std::uint64_t n = 64;
  std::uint64_t m = 16;
  std::uint64_t num_devices = 8;
  std::uint64_t rounds = 400;
  std::uint64_t local_steps = 5;
  std::uint64_t seed = 1;
  double condition = 10.0;
  double heterogeneity = 0.0;
  /// Step size at local step j is step_scale / (mu_psi * (j + gamma)) with
  /// gamma = max(step_scale * L_psi / mu_psi, local_steps).
  double step_scale = 4.0;
};

struct GapPoint {
  std::uint64_t round = 0;
  double gap = 0.0;
};

struct ConvergenceReport {
  QuadraticBenchParams params;
  std::vector<double> gaps;  // gaps[t] = F(theta_t) - F(theta*_sub), t = 0..T
  std::vector<GapPoint> checkpoints;  // T/4, T/2, T (deduplicated)
  SpectrumCheck spectrum;
  bool spectrum_all_devices = false;
  double optimum_sub = 0.0;    // F(theta*_sub)
  double optimum_full = 0.0;   // unconstrained minimum
  bool monotone = false;       // strictly decreasing over the checkpoints

  double gap_at(std::uint64_t round) const { return gaps.at(round); }
};

/// Homogeneous FAIR (every device shares one m-dimensional subspace, full
/// participation, E local gradient steps on F_i(S psi)) against the
/// closed-form subspace optimum. m == n uses the identity subspace.
ConvergenceReport quadratic_bench(const QuadraticBenchParams& params);

}  // namespace fair
