#include "fair/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>
#include <unordered_map>
#include <utility>

namespace fair {
namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

[[noreturn]] void fail_line(const std::filesystem::path& path, std::size_t line,
                            const std::string& what) {
  throw std::runtime_error(path.string() + ": line " + std::to_string(line) + ": " + what);
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  text = trim(text);
  if (text.empty()) return false;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::uint64_t densify(std::unordered_map<std::int64_t, std::uint64_t>& map,
                      std::vector<std::int64_t>& raw, std::int64_t id) {
  auto [it, inserted] = map.try_emplace(id, raw.size());
  if (inserted) raw.push_back(id);
  return it->second;
}

}  // namespace

std::string to_string(FeedbackKind kind) {
  return kind == FeedbackKind::kImplicit ? "implicit" : "explicit";
}

FeedbackKind parse_feedback_kind(const std::string& text) {
  if (text == "implicit") return FeedbackKind::kImplicit;
  if (text == "explicit") return FeedbackKind::kExplicit;
  throw std::invalid_argument("unknown feedback kind '" + text + "'");
}

InteractionDataset load_csv(const std::filesystem::path& path, FeedbackKind kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) fail_line(path, 1, "missing header");
  const auto header = split_fields(trim(line));
  if (header.size() < 2 || trim(header[0]) != "user_id" || trim(header[1]) != "item_id") {
    fail_line(path, 1, "header must start with user_id,item_id");
  }
  const bool has_rating = header.size() >= 3 && trim(header[2]) == "rating";
  if (kind == FeedbackKind::kExplicit && !has_rating) {
    fail_line(path, 1, "explicit data needs a rating column");
  }
  const std::size_t expected_fields = has_rating ? 3 : 2;

  InteractionDataset ds;
  ds.kind = kind;
  std::unordered_map<std::int64_t, std::uint64_t> user_map;
  std::unordered_map<std::int64_t, std::uint64_t> item_map;
  std::set<std::pair<std::uint64_t, std::uint64_t>> seen;

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto fields = split_fields(body);
    if (fields.size() != expected_fields) {
      fail_line(path, line_no, "expected " + std::to_string(expected_fields) + " fields, got " +
                                   std::to_string(fields.size()));
    }
    std::int64_t raw_user = 0;
    std::int64_t raw_item = 0;
    if (!parse_number(fields[0], raw_user)) fail_line(path, line_no, "non-numeric user_id");
    if (!parse_number(fields[1], raw_item)) fail_line(path, line_no, "non-numeric item_id");
    double rating = 1.0;
    if (has_rating) {
      double parsed = 0.0;
      if (!parse_number(fields[2], parsed) || !std::isfinite(parsed)) {
        fail_line(path, line_no, "non-numeric rating");
      }
      if (kind == FeedbackKind::kExplicit) rating = parsed;
    }
    const auto user = densify(user_map, ds.raw_user_ids, raw_user);
    const auto item = densify(item_map, ds.raw_item_ids, raw_item);
    if (!seen.emplace(user, item).second) {
      ++ds.dropped_duplicates;
      continue;
    }
    ds.records.push_back({user, item, rating, Split::kTrain});
  }
  ds.num_users = ds.raw_user_ids.size();
  ds.num_items = ds.raw_item_ids.size();
  return ds;
}

void write_id_mapping(const InteractionDataset& ds, const std::filesystem::path& users_csv,
                      const std::filesystem::path& items_csv) {
  auto write = [](const std::filesystem::path& path, const std::vector<std::int64_t>& raw) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "raw_id,dense_id\n";
    for (std::size_t i = 0; i < raw.size(); ++i) out << raw[i] << ',' << i << '\n';
  };
  write(users_csv, ds.raw_user_ids);
  write(items_csv, ds.raw_item_ids);
}

InteractionDataset synth_lowrank(const SynthParams& p) {
  if (p.num_users == 0 || p.num_items == 0 || p.latent_dim == 0) {
    throw std::invalid_argument("synth_lowrank: users, items and latent_dim must be >= 1");
  }
  if (!(p.density > 0.0) || p.density > 1.0) {
    throw std::invalid_argument("synth_lowrank: density must be in (0, 1]");
  }
  if (p.noise_sd < 0.0) throw std::invalid_argument("synth_lowrank: noise_sd must be >= 0");

  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto k = p.latent_dim;
  std::vector<double> users(p.num_users * k);
  std::vector<double> items(p.num_items * k);
  for (auto& v : users) v = normal(rng);
  for (auto& v : items) v = normal(rng);
  auto affinity = [&](std::uint64_t u, std::uint64_t i) {
    double s = 0.0;
    for (std::uint64_t f = 0; f < k; ++f) s += users[u * k + f] * items[i * k + f];
    return s;
  };

  InteractionDataset ds;
  ds.num_users = p.num_users;
  ds.num_items = p.num_items;
  ds.kind = p.kind;
  if (p.kind == FeedbackKind::kExplicit) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    for (std::uint64_t u = 0; u < p.num_users; ++u) {
      for (std::uint64_t i = 0; i < p.num_items; ++i) {
        if (coin(rng) >= p.density) continue;
        const double noise = p.noise_sd > 0.0 ? p.noise_sd * normal(rng) : 0.0;
        ds.records.push_back({u, i, affinity(u, i) + noise, Split::kTrain});
      }
    }
    return ds;
  }

  const auto per_user = static_cast<std::uint64_t>(
      std::ceil(p.density * static_cast<double>(p.num_items) - 1e-9));
  std::vector<std::uint64_t> order(p.num_items);
  std::vector<double> scores(p.num_items);
  for (std::uint64_t u = 0; u < p.num_users; ++u) {
    for (std::uint64_t i = 0; i < p.num_items; ++i) scores[i] = affinity(u, i);
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(per_user),
                      order.end(), [&](std::uint64_t a, std::uint64_t b) {
                        return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
                      });
    std::vector<std::uint64_t> top(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(per_user));
    std::sort(top.begin(), top.end());
    for (auto i : top) ds.records.push_back({u, i, 1.0, Split::kTrain});
  }
  return ds;
}

InteractionDataset split_train_test(const InteractionDataset& ds, std::uint64_t holdout_per_user,
                                    std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_user(ds.num_users);
  for (std::size_t r = 0; r < ds.records.size(); ++r) by_user[ds.records[r].user].push_back(r);

  InteractionDataset out = ds;
  for (auto& rec : out.records) rec.split = Split::kTrain;
  if (holdout_per_user == 0) return out;

  std::mt19937_64 rng(seed);
  for (std::uint64_t u = 0; u < ds.num_users; ++u) {
    auto& rows = by_user[u];
    if (rows.size() <= holdout_per_user) {
      throw std::invalid_argument("split_train_test: user " + std::to_string(u) + " has " +
                                  std::to_string(rows.size()) + " interactions, needs more than " +
                                  std::to_string(holdout_per_user));
    }
    // Partial Fisher-Yates: the first holdout_per_user slots become the test set.
    for (std::uint64_t s = 0; s < holdout_per_user; ++s) {
      std::uniform_int_distribution<std::size_t> pick(s, rows.size() - 1);
      std::swap(rows[s], rows[pick(rng)]);
      out.records[rows[s]].split = Split::kTest;
    }
  }
  return out;
}

UserIndex::UserIndex(const InteractionDataset& ds)
    : num_items_(ds.num_items), train_(ds.num_users), test_(ds.num_users) {
  for (const auto& rec : ds.records) {
    (rec.split == Split::kTrain ? train_ : test_)[rec.user].push_back(rec.item);
  }
  for (auto& v : train_) std::sort(v.begin(), v.end());
  for (auto& v : test_) std::sort(v.begin(), v.end());
}

bool UserIndex::is_train_positive(std::uint64_t user, std::uint64_t item) const {
  const auto& v = train_[user];
  return std::binary_search(v.begin(), v.end(), item);
}

std::vector<std::uint64_t> sample_negatives(const UserIndex& index, std::uint64_t user,
                                            std::size_t count, std::mt19937_64& rng) {
  if (user >= index.num_users()) {
    throw std::out_of_range("sample_negatives: user " + std::to_string(user) + " out of range");
  }
  std::vector<std::uint64_t> out;
  if (count == 0) return out;
  const auto positives = index.train_items(user);
  const std::uint64_t n_items = index.num_items();
  if (positives.size() >= n_items) {
    throw std::invalid_argument("sample_negatives: user " + std::to_string(user) +
                                " has every item as a train positive");
  }
  out.reserve(count);
  if (positives.size() * 2 <= n_items) {
    // Rejection sampling stays uniform over the complement.
    std::uniform_int_distribution<std::uint64_t> pick(0, n_items - 1);
    while (out.size() < count) {
      const auto item = pick(rng);
      if (!index.is_train_positive(user, item)) out.push_back(item);
    }
    return out;
  }
  std::vector<std::uint64_t> complement;
  complement.reserve(n_items - positives.size());
  for (std::uint64_t i = 0; i < n_items; ++i) {
    if (!index.is_train_positive(user, i)) complement.push_back(i);
  }
  std::uniform_int_distribution<std::size_t> pick(0, complement.size() - 1);
  for (std::size_t c = 0; c < count; ++c) out.push_back(complement[pick(rng)]);
  return out;
}

DevicePartition partition_by_user(const InteractionDataset& ds) {
  DevicePartition part;
  part.device_records.resize(ds.num_users);
  part.sample_counts.assign(ds.num_users, 0);
  for (const auto& rec : ds.records) {
    if (rec.split != Split::kTrain) continue;
    part.device_records[rec.user].push_back(rec);
    ++part.sample_counts[rec.user];
  }
  return part;
}

}  // namespace fair
