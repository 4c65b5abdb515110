#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace fair {

enum class FeedbackKind { kImplicit, kExplicit };
enum class Split { kTrain, kTest };

std::string to_string(FeedbackKind kind);
FeedbackKind parse_feedback_kind(const std::string& text);

struct Interaction {
  std::uint64_t user = 0;
  std::uint64_t item = 0;
  double rating = 1.0;
  Split split = Split::kTrain;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

struct InteractionDataset {
  std::uint64_t num_users = 0;
  std::uint64_t num_items = 0;
  FeedbackKind kind = FeedbackKind::kImplicit;
  std::vector<Interaction> records;
  /// Dense index -> raw id, filled by load_csv.
  std::vector<std::int64_t> raw_user_ids;
  std::vector<std::int64_t> raw_item_ids;
  std::size_t dropped_duplicates = 0;
};

/// Reads `user_id,item_id[,rating]` with a header line (LF or CRLF). Raw ids
/// are densified in order of first appearance; a repeated (user, item) keeps
/// its first row and bumps dropped_duplicates. Errors name the line number.
InteractionDataset load_csv(const std::filesystem::path& path, FeedbackKind kind);

/// Writes `raw_id,dense_id` sidecars for users and items.
void write_id_mapping(const InteractionDataset& ds, const std::filesystem::path& users_csv,
                      const std::filesystem::path& items_csv);

struct SynthParams {
  std::uint64_t num_users = 100;
  std::uint64_t num_items = 500;
  std::uint64_t latent_dim = 8;
  double density = 0.05;
  double noise_sd = 0.0;
  std::uint64_t seed = 1;
  FeedbackKind kind = FeedbackKind::kImplicit;
};

/// Low-rank synthetic interactions from standard-normal user/item factors.
/// Explicit: UV^T + noise on a Bernoulli(density) mask. Implicit: each
/// user's top ceil(density * items) items by UV^T (ties to the lower id).
InteractionDataset synth_lowrank(const SynthParams& params);

/// Moves `holdout_per_user` uniformly chosen records of every user into the
/// test split. Throws if some user has too few records.
InteractionDataset split_train_test(const InteractionDataset& ds, std::uint64_t holdout_per_user,
                                    std::uint64_t seed);

/// Per-user sorted item lists for each split.
class UserIndex {
 public:
  explicit UserIndex(const InteractionDataset& ds);

  std::uint64_t num_users() const { return train_.size(); }
  std::uint64_t num_items() const { return num_items_; }
  std::span<const std::uint64_t> train_items(std::uint64_t user) const { return train_[user]; }
  std::span<const std::uint64_t> test_items(std::uint64_t user) const { return test_[user]; }
  bool is_train_positive(std::uint64_t user, std::uint64_t item) const;

 private:
  std::uint64_t num_items_;
  std::vector<std::vector<std::uint64_t>> train_;
  std::vector<std::vector<std::uint64_t>> test_;
};

/// `count` items drawn uniformly (with replacement) from the items that are
/// not TRAIN positives of `user`. Test positives are eligible.
std::vector<std::uint64_t> sample_negatives(const UserIndex& index, std::uint64_t user,
                                            std::size_t count, std::mt19937_64& rng);

/// One device per user: device i holds exactly user i's train records.
struct DevicePartition {
  std::vector<std::vector<Interaction>> device_records;
  std::vector<std::uint64_t> sample_counts;
};

DevicePartition partition_by_user(const InteractionDataset& ds);

}  // namespace fair
