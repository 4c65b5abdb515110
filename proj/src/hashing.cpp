#include "fair/hashing.hpp"

#include <algorithm>
#include <array>
#include <random>
#include <stdexcept>
#include <string>

namespace fair {
namespace {

using u128 = unsigned __int128;

std::uint64_t mul_mod(std::uint64_t a, std::uint64_t b, std::uint64_t m) {
  return static_cast<std::uint64_t>(static_cast<u128>(a) * b % m);
}

std::uint64_t pow_mod(std::uint64_t base, std::uint64_t exp, std::uint64_t m) {
  std::uint64_t result = 1 % m;
  base %= m;
  while (exp > 0) {
    if (exp & 1) result = mul_mod(result, base, m);
    base = mul_mod(base, base, m);
    exp >>= 1;
  }
  return result;
}

constexpr std::uint64_t kPrimeFloor = std::uint64_t{1} << 31;

}  // namespace

UniversalHash::UniversalHash(std::uint64_t a, std::uint64_t b, std::uint64_t p,
                             std::uint64_t m)
    : a_(a), b_(b), p_(p), m_(m) {
  if (m_ == 0) throw std::invalid_argument("universal hash: range must be >= 1");
  if (!is_prime(p_)) {
    throw std::invalid_argument("universal hash: modulus " + std::to_string(p_) +
                                " is not prime");
  }
  if (p_ <= m_) throw std::invalid_argument("universal hash: modulus must exceed range");
  if (a_ == 0 || a_ >= p_) throw std::invalid_argument("universal hash: a must be in [1, p-1]");
  if (b_ >= p_) throw std::invalid_argument("universal hash: b must be in [0, p-1]");
}

// Deterministic Miller-Rabin; this witness set is exact for all 64-bit n.
bool is_prime(std::uint64_t n) {
  if (n < 2) return false;
  constexpr std::array<std::uint64_t, 12> kWitnesses = {2, 3, 5, 7, 11, 13,
                                                        17, 19, 23, 29, 31, 37};
  for (auto w : kWitnesses) {
    if (n % w == 0) return n == w;
  }
  std::uint64_t d = n - 1;
  int r = 0;
  while ((d & 1) == 0) {
    d >>= 1;
    ++r;
  }
  for (auto w : kWitnesses) {
    std::uint64_t x = pow_mod(w, d, n);
    if (x == 1 || x == n - 1) continue;
    bool composite = true;
    for (int i = 1; i < r; ++i) {
      x = mul_mod(x, x, n);
      if (x == n - 1) {
        composite = false;
        break;
      }
    }
    if (composite) return false;
  }
  return true;
}

std::uint64_t next_prime_above(std::uint64_t n) {
  std::uint64_t candidate = n + 1;
  while (!is_prime(candidate)) ++candidate;
  return candidate;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

UniversalHash new_universal_hash(std::uint64_t seed, std::uint64_t domain_size,
                                 std::uint64_t range) {
  if (range == 0) throw std::invalid_argument("new_universal_hash: range must be >= 1");
  if (domain_size == 0) {
    throw std::invalid_argument("new_universal_hash: domain_size must be >= 1");
  }
  const std::uint64_t p = next_prime_above(std::max({domain_size, range, kPrimeFloor}));
  // Plain modulo reduction rather than a std distribution: the distributions
  // are implementation-defined, the engine output is not.
  std::mt19937_64 engine(seed);
  const std::uint64_t a = 1 + engine() % (p - 1);
  const std::uint64_t b = engine() % p;
  return UniversalHash(a, b, p, range);
}

SignHash::SignHash(std::uint64_t seed, std::uint64_t domain_size)
    : hash_(new_universal_hash(seed, domain_size, 2)) {}

}  // namespace fair
