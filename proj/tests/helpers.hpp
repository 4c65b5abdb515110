#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fair/subspace.hpp"

namespace testing {

// A family whose base hash realizes exactly `map` on {0, ..., map.size()-1}.
// Small (a, b, p) are searched exhaustively.
inline fair::SubspaceFamily family_with_map(const std::vector<std::uint64_t>& map,
                                            std::uint64_t m, fair::FamilyOptions opts = {}) {
  const std::uint64_t n = map.size();
  for (std::uint64_t p : {5, 7, 11, 13, 17, 19, 23, 29, 31}) {
    if (p <= m || p < n) continue;
    for (std::uint64_t a = 1; a < p; ++a) {
      for (std::uint64_t b = 0; b < p; ++b) {
        bool ok = true;
        for (std::uint64_t x = 0; x < n && ok; ++x) ok = ((a * x + b) % p) % m == map[x];
        if (ok) return fair::SubspaceFamily(n, fair::UniversalHash(a, b, p, m), opts);
      }
    }
  }
  throw std::logic_error("no small hash realizes the requested map");
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("fair_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace testing
