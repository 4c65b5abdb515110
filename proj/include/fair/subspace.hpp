#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "fair/hashing.hpp"

namespace fair {

class Subspace;

struct FamilyOptions {
  bool use_sign_hash = false;
  bool use_identity_at_full = true;
};

/// A consistent and collapsible family of implicit projection matrices over
/// R^n. Every member folds the same base hash (range m_max) modulo its own
/// power-of-two dimension, so equal dimensions coincide and smaller members
/// nest inside larger ones.
class SubspaceFamily {
 public:
  SubspaceFamily(std::uint64_t n, std::uint64_t m_max, std::uint64_t seed,
                 FamilyOptions options = {});

  /// Family over an explicit base hash (range m_max = base.m()). The sign
  /// hash, if enabled, is still derived from `sign_seed`.
  SubspaceFamily(std::uint64_t n, const UniversalHash& base, FamilyOptions options = {},
                 std::uint64_t sign_seed = 0);

  std::uint64_t n() const { return n_; }
  std::uint64_t m_max() const { return m_max_; }
  const UniversalHash& base_hash() const { return base_hash_; }
  const std::optional<SignHash>& sign_hash() const { return sign_hash_; }
  const FamilyOptions& options() const { return options_; }

  /// m = greatest power of two <= floor(alpha * n), capped at m_max. alpha == 1
  /// yields the identity subspace when use_identity_at_full is set.
  Subspace subspace_for_capacity(double alpha) const;

  /// Member of dimension m; m must be a power of two dividing m_max.
  Subspace with_dimension(std::uint64_t m) const;

  /// The exact full space (m = n, no hashing).
  Subspace identity() const;

 private:
  std::uint64_t n_;
  std::uint64_t m_max_;
  UniversalHash base_hash_;
  std::optional<SignHash> sign_hash_;
  FamilyOptions options_;
};

/// Implicit n x m projection S with exactly one non-zero (+1, or the shared
/// sign) per row. Holds O(1) state; S itself is never stored.
class Subspace {
 public:
  std::uint64_t n() const { return n_; }
  std::uint64_t m() const { return m_; }
  bool is_identity() const { return identity_; }

  std::uint64_t row_bucket(std::uint64_t a) const {
    return identity_ ? a : base_hash_(a) % m_;
  }
  double sign(std::uint64_t a) const {
    return (identity_ || !sign_hash_) ? 1.0 : static_cast<double>((*sign_hash_)(a));
  }

  /// Least-squares coordinates of theta in the columns of S (per-bucket
  /// signed mean; empty buckets get 0).
  std::vector<double> reduce(std::span<const double> theta) const;

  /// S * psi.
  std::vector<double> recover(std::span<const double> psi) const;

  /// (S * psi)[begin:end] in O(end - begin).
  std::vector<double> recover_slice(std::span<const double> psi, std::uint64_t begin,
                                    std::uint64_t end) const;
  /// Same, writing into a caller-provided buffer of length out.size().
  void recover_slice_into(std::span<const double> psi, std::uint64_t begin,
                          std::span<double> out) const;

  /// accum += S[begin:begin+|grad|, :]^T * grad.
  void scatter_grad(std::uint64_t begin, std::span<const double> grad,
                    std::span<double> accum) const;

  /// Number of rows of S landing in each column.
  std::vector<std::uint64_t> bucket_counts() const;

  /// Materialized S; only for small oracle checks (n * m <= 2^20).
  Eigen::MatrixXd dense_matrix() const;

  static constexpr std::uint64_t kDenseCap = std::uint64_t{1} << 20;

 private:
  friend class SubspaceFamily;
  Subspace(std::uint64_t n, std::uint64_t m, bool identity, UniversalHash base,
           std::optional<SignHash> sign)
      : n_(n), m_(m), identity_(identity), base_hash_(base), sign_hash_(sign) {}

  std::uint64_t n_;
  std::uint64_t m_;
  bool identity_;
  UniversalHash base_hash_;
  std::optional<SignHash> sign_hash_;
};

bool is_power_of_two(std::uint64_t x);

/// Greatest power of two <= x (x >= 1).
std::uint64_t floor_power_of_two(std::uint64_t x);

}  // namespace fair
