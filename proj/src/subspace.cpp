#include "fair/subspace.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fair {
namespace {

constexpr std::uint64_t kSignSalt = 0x5167;

void require_length(std::size_t got, std::uint64_t want, const char* what) {
  if (got != want) {
    throw std::invalid_argument(std::string(what) + ": expected length " +
                                std::to_string(want) + ", got " + std::to_string(got));
  }
}

}  // namespace

bool is_power_of_two(std::uint64_t x) { return std::has_single_bit(x); }

std::uint64_t floor_power_of_two(std::uint64_t x) {
  if (x == 0) throw std::invalid_argument("floor_power_of_two: x must be >= 1");
  return std::bit_floor(x);
}

namespace {
std::uint64_t nonzero_m_max(std::uint64_t m_max) {
  if (m_max == 0) throw std::invalid_argument("subspace family: m_max must be >= 1");
  return m_max;
}
}  // namespace

SubspaceFamily::SubspaceFamily(std::uint64_t n, std::uint64_t m_max, std::uint64_t seed,
                               FamilyOptions options)
    : SubspaceFamily(n,
                     new_universal_hash(seed, std::max<std::uint64_t>(n, 1),
                                        nonzero_m_max(m_max)),
                     options, mix_seed(seed, kSignSalt)) {}

SubspaceFamily::SubspaceFamily(std::uint64_t n, const UniversalHash& base, FamilyOptions options,
                               std::uint64_t sign_seed)
    : n_(n), m_max_(base.m()), base_hash_(base), options_(options) {
  if (n_ == 0) throw std::invalid_argument("subspace family: n must be >= 1");
  if (!is_power_of_two(m_max_) || m_max_ > n_) {
    throw std::invalid_argument("subspace family: m_max must be a power of two in [1, n], got " +
                                std::to_string(m_max_));
  }
  if (base_hash_.p() < n_) {
    throw std::invalid_argument("subspace family: hash modulus must cover the domain");
  }
  if (options_.use_sign_hash) sign_hash_.emplace(sign_seed, n_);
}

Subspace SubspaceFamily::with_dimension(std::uint64_t m) const {
  if (!is_power_of_two(m) || m > m_max_) {
    throw std::invalid_argument("subspace dimension " + std::to_string(m) +
                                " must be a power of two dividing " + std::to_string(m_max_));
  }
  return Subspace(n_, m, false, base_hash_, sign_hash_);
}

Subspace SubspaceFamily::identity() const {
  return Subspace(n_, n_, true, base_hash_, std::nullopt);
}

Subspace SubspaceFamily::subspace_for_capacity(double alpha) const {
  if (!(alpha > 0.0) || alpha > 1.0) {
    throw std::invalid_argument("capacity alpha must be in (0, 1], got " + std::to_string(alpha));
  }
  if (alpha == 1.0 && options_.use_identity_at_full) return identity();
  const auto budget = static_cast<std::uint64_t>(std::floor(alpha * static_cast<double>(n_)));
  if (budget < 1) {
    throw std::invalid_argument("capacity alpha " + std::to_string(alpha) +
                                " leaves no parameters for n = " + std::to_string(n_));
  }
  return with_dimension(std::min(floor_power_of_two(budget), m_max_));
}

std::vector<double> Subspace::reduce(std::span<const double> theta) const {
  require_length(theta.size(), n_, "reduce");
  if (identity_) return {theta.begin(), theta.end()};
  std::vector<double> psi(m_, 0.0);
  std::vector<std::uint64_t> counts(m_, 0);
  for (std::uint64_t a = 0; a < n_; ++a) {
    const auto j = row_bucket(a);
    psi[j] += sign(a) * theta[a];
    ++counts[j];
  }
  for (std::uint64_t j = 0; j < m_; ++j) {
    if (counts[j] > 0) psi[j] /= static_cast<double>(counts[j]);
  }
  return psi;
}

std::vector<double> Subspace::recover(std::span<const double> psi) const {
  return recover_slice(psi, 0, n_);
}

std::vector<double> Subspace::recover_slice(std::span<const double> psi, std::uint64_t begin,
                                            std::uint64_t end) const {
  if (begin >= end || end > n_) {
    throw std::out_of_range("recover_slice: bad slice [" + std::to_string(begin) + ", " +
                            std::to_string(end) + ") for n = " + std::to_string(n_));
  }
  std::vector<double> out(end - begin);
  recover_slice_into(psi, begin, out);
  return out;
}

void Subspace::recover_slice_into(std::span<const double> psi, std::uint64_t begin,
                                  std::span<double> out) const {
  require_length(psi.size(), m_, "recover");
  if (begin + out.size() > n_) throw std::out_of_range("recover_slice: slice exceeds n");
  for (std::size_t t = 0; t < out.size(); ++t) {
    const auto a = begin + t;
    out[t] = sign(a) * psi[row_bucket(a)];
  }
}

void Subspace::scatter_grad(std::uint64_t begin, std::span<const double> grad,
                            std::span<double> accum) const {
  require_length(accum.size(), m_, "scatter_grad");
  if (begin + grad.size() > n_) throw std::out_of_range("scatter_grad: slice exceeds n");
  for (std::size_t t = 0; t < grad.size(); ++t) {
    const auto a = begin + t;
    accum[row_bucket(a)] += sign(a) * grad[t];
  }
}

std::vector<std::uint64_t> Subspace::bucket_counts() const {
  std::vector<std::uint64_t> counts(m_, 0);
  for (std::uint64_t a = 0; a < n_; ++a) ++counts[row_bucket(a)];
  return counts;
}

Eigen::MatrixXd Subspace::dense_matrix() const {
  if (n_ * m_ > kDenseCap) {
    throw std::length_error("dense_matrix: n*m = " + std::to_string(n_ * m_) +
                            " exceeds the materialization cap");
  }
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_),
                                            static_cast<Eigen::Index>(m_));
  for (std::uint64_t a = 0; a < n_; ++a) {
    s(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(row_bucket(a))) = sign(a);
  }
  return s;
}

}  // namespace fair
