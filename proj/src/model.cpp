#include "fair/model.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace fair {
namespace {

double dot(std::span<const double> x, std::span<const double> y) {
  return std::inner_product(x.begin(), x.end(), y.begin(), 0.0);
}

double squared_norm(std::span<const double> x) { return dot(x, x); }

}  // namespace

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double neg_log_sigmoid(double x) {
  if (x > 0) return std::log1p(std::exp(-x));
  return -x + std::log1p(std::exp(x));
}

HashedEmbeddingTable::HashedEmbeddingTable(std::uint64_t num_items, std::uint64_t dim,
                                           Subspace subspace, std::span<const double> psi,
                                           MemoryMeter* meter)
    : num_items_(num_items),
      dim_(dim),
      subspace_(std::move(subspace)),
      psi_(CountingAllocator<double>(meter)) {
  if (dim_ == 0 || num_items_ == 0) {
    throw std::invalid_argument("embedding table: num_items and dim must be >= 1");
  }
  if (subspace_.n() != num_items_ * dim_) {
    throw std::invalid_argument("embedding table: subspace n = " + std::to_string(subspace_.n()) +
                                " does not match num_items*dim = " +
                                std::to_string(num_items_ * dim_));
  }
  if (psi.size() != subspace_.m()) {
    throw std::invalid_argument("embedding table: psi has length " + std::to_string(psi.size()) +
                                ", subspace expects " + std::to_string(subspace_.m()));
  }
  psi_.assign(psi.begin(), psi.end());
}

void HashedEmbeddingTable::check_row(std::uint64_t row) const {
  if (row >= num_items_) {
    throw std::out_of_range("embedding row " + std::to_string(row) + " out of range (" +
                            std::to_string(num_items_) + " items)");
  }
}

std::vector<double> HashedEmbeddingTable::lookup(std::uint64_t row) const {
  std::vector<double> out(dim_);
  lookup_into(row, out);
  return out;
}

void HashedEmbeddingTable::lookup_into(std::uint64_t row, std::span<double> out) const {
  check_row(row);
  subspace_.recover_slice_into(psi_, row * dim_, out.first(dim_));
}

void HashedEmbeddingTable::scatter(std::uint64_t row, std::span<const double> grad_row) {
  check_row(row);
  subspace_.scatter_grad(row * dim_, grad_row.first(dim_), psi_);
}

ClientModel::ClientModel(std::span<const double> user_vec, HashedEmbeddingTable items,
                         SgdParams params, MemoryMeter* meter)
    : params_(params),
      user_vec_(user_vec.begin(), user_vec.end(), CountingAllocator<double>(meter)),
      items_(std::move(items)),
      scratch_(kRowsPerStep * items_.dim(), 0.0, CountingAllocator<double>(meter)) {
  if (user_vec_.size() != items_.dim()) {
    throw std::invalid_argument("client model: user vector length must equal embedding dim");
  }
  if (!(params_.learning_rate > 0.0)) {
    throw std::invalid_argument("client model: learning rate must be positive");
  }
}

double ClientModel::score(std::uint64_t item) const {
  if (item >= items_.num_items()) {
    throw std::out_of_range("score: item " + std::to_string(item) + " out of range");
  }
  // Inline partial recovery so a const score never touches scratch_.
  const auto d = items_.dim();
  const auto& sub = items_.subspace();
  const auto psi = items_.psi();
  const std::uint64_t base = item * d;
  double s = 0.0;
  for (std::uint64_t t = 0; t < d; ++t) {
    s += user_vec_[t] * sub.sign(base + t) * psi[sub.row_bucket(base + t)];
  }
  return s;
}

void ClientModel::check_pair(const ImplicitExample& ex) const {
  if (ex.pos_item == ex.neg_item) {
    throw std::invalid_argument("bpr: positive and negative item must differ (item " +
                                std::to_string(ex.pos_item) + ")");
  }
}

double ClientModel::bpr_loss(const ImplicitExample& ex) const {
  check_pair(ex);
  const auto e_pos = items_.lookup(ex.pos_item);
  const auto e_neg = items_.lookup(ex.neg_item);
  const double margin = dot(user_vec_, e_pos) - dot(user_vec_, e_neg);
  return neg_log_sigmoid(margin) +
         params_.l2 * (squared_norm(user_vec_) + squared_norm(e_pos) + squared_norm(e_neg));
}

double ClientModel::mse_loss(const ExplicitExample& ex) const {
  const double err = score(ex.item) - ex.rating;
  return err * err;
}

double ClientModel::bpr_step(const ImplicitExample& ex) {
  check_pair(ex);
  const auto d = items_.dim();
  std::span<double> e_pos(scratch_.data(), d);
  std::span<double> e_neg(scratch_.data() + d, d);
  items_.lookup_into(ex.pos_item, e_pos);
  items_.lookup_into(ex.neg_item, e_neg);

  const double margin = dot(user_vec_, e_pos) - dot(user_vec_, e_neg);
  const double loss =
      neg_log_sigmoid(margin) +
      params_.l2 * (squared_norm(user_vec_) + squared_norm(e_pos) + squared_norm(e_neg));
  // d loss / d margin = -sigmoid(-margin)
  const double coeff = sigmoid(-margin);
  const double lr = params_.learning_rate;
  const double two_l2 = 2.0 * params_.l2;

  // Each coordinate's three gradients depend only on that coordinate's old
  // values, so the row buffers can be overwritten with -lr * grad in place.
  for (std::uint64_t t = 0; t < d; ++t) {
    const double u = user_vec_[t];
    const double p = e_pos[t];
    const double q = e_neg[t];
    user_vec_[t] = u - lr * (-coeff * (p - q) + two_l2 * u);
    e_pos[t] = -lr * (-coeff * u + two_l2 * p);
    e_neg[t] = -lr * (coeff * u + two_l2 * q);
  }
  items_.scatter(ex.pos_item, e_pos);
  items_.scatter(ex.neg_item, e_neg);
  return loss;
}

double ClientModel::mse_step(const ExplicitExample& ex) {
  if (!std::isfinite(ex.rating)) throw std::invalid_argument("mse: rating must be finite");
  const auto d = items_.dim();
  std::span<double> e(scratch_.data(), d);
  items_.lookup_into(ex.item, e);
  const double err = dot(user_vec_, e) - ex.rating;
  const double lr = params_.learning_rate;
  for (std::uint64_t t = 0; t < d; ++t) {
    const double u = user_vec_[t];
    user_vec_[t] = u - lr * 2.0 * err * e[t];
    e[t] = -lr * 2.0 * err * u;
  }
  items_.scatter(ex.item, e);
  return err * err;
}

}  // namespace fair
