#pragma once

#include <cstdint>

namespace fair {

/// Universal hash h(x) = ((a*x + b) mod p) mod m.
///
/// Holds four integers and nothing else; every projection matrix in the
/// library is defined implicitly through one of these.
class UniversalHash {
 public:
  /// Validates 1 <= a < p, b < p, p prime and p > m >= 1.
  /// Throws std::invalid_argument otherwise.
  UniversalHash(std::uint64_t a, std::uint64_t b, std::uint64_t p, std::uint64_t m);

  /// Requires x < p. Intermediates are 128-bit, so any 64-bit p is safe.
  std::uint64_t operator()(std::uint64_t x) const {
    const auto wide = static_cast<unsigned __int128>(a_) * x + b_;
    return static_cast<std::uint64_t>(wide % p_) % m_;
  }

  std::uint64_t a() const { return a_; }
  std::uint64_t b() const { return b_; }
  std::uint64_t p() const { return p_; }
  std::uint64_t m() const { return m_; }

  friend bool operator==(const UniversalHash&, const UniversalHash&) = default;

 private:
  std::uint64_t a_;
  std::uint64_t b_;
  std::uint64_t p_;
  std::uint64_t m_;
};

/// Draws (a, b) from a seeded mt19937_64. The modulus is the smallest prime
/// strictly above max(domain_size, range, 2^31), so the same seed gives the
/// same function on every platform.
UniversalHash new_universal_hash(std::uint64_t seed, std::uint64_t domain_size,
                                 std::uint64_t range);

/// Maps x to +1 or -1 through a two-bucket universal hash.
class SignHash {
 public:
  SignHash(std::uint64_t seed, std::uint64_t domain_size);

  int operator()(std::uint64_t x) const { return hash_(x) == 0 ? 1 : -1; }
  const UniversalHash& hash() const { return hash_; }

  friend bool operator==(const SignHash&, const SignHash&) = default;

 private:
  UniversalHash hash_;
};

bool is_prime(std::uint64_t n);

/// Smallest prime strictly greater than `n`.
std::uint64_t next_prime_above(std::uint64_t n);

/// SplitMix64 finalizer; used to derive independent seeds from one master seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace fair
