#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fair/data.hpp"

namespace fair {

/// NDCG@k over the candidates {all items} \ train_positives, ranked by
/// descending score with ties going to the lower item id. Gains are 1 for
/// test positives, 0 otherwise. Both item lists must be sorted.
double ndcg_at_k(std::span<const double> scores, std::span<const std::uint64_t> train_positives,
                 std::span<const std::uint64_t> test_positives, std::uint64_t k);

struct EvalResult {
  std::string metric;  // "ndcg@<k>" or "mse"
  double value = 0.0;
  std::uint64_t evaluated = 0;  // users (implicit) or records (explicit)
};

/// Scores the server item table `theta` (num_items x dim, row-major) with each
/// user's local vector (`user_vecs`, num_users x dim). Implicit data: mean
/// NDCG@k over users with a non-empty test split. Explicit: test-set MSE.
EvalResult evaluate_server(std::span<const double> theta, std::span<const double> user_vecs,
                           std::uint64_t dim, const InteractionDataset& ds,
                           const UserIndex& index, std::uint64_t k);

struct MetricRecord {
  std::uint64_t round = 0;
  std::string mode;
  std::string scheme;
  std::uint64_t seed = 0;
  std::string metric;
  double value = 0.0;

  friend bool operator==(const MetricRecord&, const MetricRecord&) = default;
};

/// Ordered run metrics. Rounds are non-decreasing and values finite.
class MetricsLog {
 public:
  void append(MetricRecord record);

  const std::vector<MetricRecord>& records() const { return records_; }
  std::vector<MetricRecord> filter(const std::string& metric) const;
  /// Value of the last record named `metric`; throws if there is none.
  double last(const std::string& metric) const;

  /// Header `round,mode,scheme,seed,metric,value`, LF endings, values with
  /// 17 significant digits.
  std::string to_csv() const;

  friend bool operator==(const MetricsLog&, const MetricsLog&) = default;

 private:
  std::vector<MetricRecord> records_;
};

}  // namespace fair
