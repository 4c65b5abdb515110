#include "fair/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace fair {

double ndcg_at_k(std::span<const double> scores, std::span<const std::uint64_t> train_positives,
                 std::span<const std::uint64_t> test_positives, std::uint64_t k) {
  if (k == 0) throw std::invalid_argument("ndcg: k must be >= 1");
  if (test_positives.empty()) throw std::invalid_argument("ndcg: empty test set");

  std::vector<std::uint64_t> candidates;
  candidates.reserve(scores.size());
  for (std::uint64_t i = 0; i < scores.size(); ++i) {
    if (!std::binary_search(train_positives.begin(), train_positives.end(), i)) {
      candidates.push_back(i);
    }
  }
  if (candidates.empty()) throw std::invalid_argument("ndcg: no candidate items");

  const auto depth = std::min<std::size_t>(k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(depth),
                    candidates.end(), [&](std::uint64_t a, std::uint64_t b) {
                      return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
                    });

  double dcg = 0.0;
  for (std::size_t r = 0; r < depth; ++r) {
    if (std::binary_search(test_positives.begin(), test_positives.end(), candidates[r])) {
      dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
  }
  double idcg = 0.0;
  const auto ideal = std::min<std::size_t>(k, test_positives.size());
  for (std::size_t r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return dcg / idcg;
}

EvalResult evaluate_server(std::span<const double> theta, std::span<const double> user_vecs,
                           std::uint64_t dim, const InteractionDataset& ds,
                           const UserIndex& index, std::uint64_t k) {
  if (theta.size() != ds.num_items * dim) {
    throw std::invalid_argument("evaluate_server: theta length does not match num_items*dim");
  }
  if (user_vecs.size() != ds.num_users * dim) {
    throw std::invalid_argument("evaluate_server: user_vecs length does not match num_users*dim");
  }
  auto predict = [&](std::uint64_t u, std::uint64_t i) {
    double s = 0.0;
    for (std::uint64_t t = 0; t < dim; ++t) s += user_vecs[u * dim + t] * theta[i * dim + t];
    return s;
  };

  EvalResult result;
  if (ds.kind == FeedbackKind::kExplicit) {
    result.metric = "mse";
    double sum = 0.0;
    for (const auto& rec : ds.records) {
      if (rec.split != Split::kTest) continue;
      const double err = predict(rec.user, rec.item) - rec.rating;
      sum += err * err;
      ++result.evaluated;
    }
    if (result.evaluated == 0) throw std::invalid_argument("evaluate_server: no test records");
    result.value = sum / static_cast<double>(result.evaluated);
    return result;
  }

  result.metric = "ndcg@" + std::to_string(k);
  std::vector<double> scores(ds.num_items);
  double sum = 0.0;
  for (std::uint64_t u = 0; u < ds.num_users; ++u) {
    const auto test = index.test_items(u);
    if (test.empty()) continue;
    for (std::uint64_t i = 0; i < ds.num_items; ++i) scores[i] = predict(u, i);
    sum += ndcg_at_k(scores, index.train_items(u), test, k);
    ++result.evaluated;
  }
  if (result.evaluated == 0) throw std::invalid_argument("evaluate_server: no evaluable users");
  result.value = sum / static_cast<double>(result.evaluated);
  return result;
}

void MetricsLog::append(MetricRecord record) {
  if (!records_.empty() && record.round < records_.back().round) {
    throw std::invalid_argument("metrics log: rounds must be non-decreasing");
  }
  if (!std::isfinite(record.value)) {
    throw std::invalid_argument("metrics log: non-finite value for " + record.metric);
  }
  records_.push_back(std::move(record));
}

std::vector<MetricRecord> MetricsLog::filter(const std::string& metric) const {
  std::vector<MetricRecord> out;
  std::copy_if(records_.begin(), records_.end(), std::back_inserter(out),
               [&](const MetricRecord& r) { return r.metric == metric; });
  return out;
}

double MetricsLog::last(const std::string& metric) const {
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->metric == metric) return it->value;
  }
  throw std::out_of_range("metrics log: no record named " + metric);
}

std::string MetricsLog::to_csv() const {
  std::string out = "round,mode,scheme,seed,metric,value\n";
  char buf[64];
  for (const auto& r : records_) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.value);
    out += std::to_string(r.round) + ',' + r.mode + ',' + r.scheme + ',' +
           std::to_string(r.seed) + ',' + r.metric + ',' + buf + '\n';
  }
  return out;
}

}  // namespace fair
