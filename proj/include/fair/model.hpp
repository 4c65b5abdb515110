#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fair/memory.hpp"
#include "fair/subspace.hpp"

namespace fair {

/// A virtual num_items x dim embedding table whose flattened parameters live
/// in the column space of `subspace`. Only psi (length subspace.m()) is
/// resident; rows are recovered on demand.
class HashedEmbeddingTable {
 public:
  HashedEmbeddingTable(std::uint64_t num_items, std::uint64_t dim, Subspace subspace,
                       std::span<const double> psi, MemoryMeter* meter = nullptr);

  std::uint64_t num_items() const { return num_items_; }
  std::uint64_t dim() const { return dim_; }
  const Subspace& subspace() const { return subspace_; }
  std::span<const double> psi() const { return psi_; }
  std::span<double> psi() { return psi_; }

  std::vector<double> lookup(std::uint64_t row) const;
  void lookup_into(std::uint64_t row, std::span<double> out) const;

  /// psi += S[row*d:(row+1)*d, :]^T * grad_row.
  void scatter(std::uint64_t row, std::span<const double> grad_row);

 private:
  void check_row(std::uint64_t row) const;

  std::uint64_t num_items_;
  std::uint64_t dim_;
  Subspace subspace_;
  ParamVector psi_;
};

struct ImplicitExample {
  std::uint64_t pos_item;
  std::uint64_t neg_item;
};

struct ExplicitExample {
  std::uint64_t item;
  double rating;
};

struct SgdParams {
  double learning_rate = 0.05;
  /// L2 weight on the realized BPR parameters.
  double l2 = 1e-6;
};

/// One device's GMF scorer: an exact local user vector and a hashed item
/// table. Plain SGD, one example per step.
class ClientModel {
 public:
  ClientModel(std::span<const double> user_vec, HashedEmbeddingTable items, SgdParams params,
              MemoryMeter* meter = nullptr);

  double score(std::uint64_t item) const;

  /// -ln sigmoid(s_pos - s_neg) + l2 * (|u|^2 + |e_pos|^2 + |e_neg|^2).
  double bpr_loss(const ImplicitExample& ex) const;
  /// (s_item - rating)^2.
  double mse_loss(const ExplicitExample& ex) const;

  /// One SGD update; returns the loss before the update.
  double bpr_step(const ImplicitExample& ex);
  double mse_step(const ExplicitExample& ex);

  std::span<const double> user_vec() const { return user_vec_; }
  std::span<double> user_vec() { return user_vec_; }
  const HashedEmbeddingTable& items() const { return items_; }
  HashedEmbeddingTable& items() { return items_; }
  const SgdParams& params() const { return params_; }

  /// Rows realized at once by a BPR step (pos and neg).
  static constexpr std::uint64_t kRowsPerStep = 2;

 private:
  void check_pair(const ImplicitExample& ex) const;

  SgdParams params_;
  ParamVector user_vec_;
  HashedEmbeddingTable items_;
  ParamVector scratch_;  // kRowsPerStep rows of length dim
};

/// -ln sigmoid(x), stable for large |x|.
double neg_log_sigmoid(double x);
double sigmoid(double x);

}  // namespace fair
