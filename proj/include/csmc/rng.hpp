#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string_view>

namespace csmc {

namespace detail {

// SplitMix64 finalizer; a full-avalanche permutation of 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;
constexpr std::uint64_t kIntTag = 0x6a09e667f3bcc908ull;
constexpr std::uint64_t kStrTag = 0xbb67ae8584caa73bull;

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace detail

// Identifies one random stream; obtained from seed_derive/derive.
struct StreamKey {
  std::uint64_t hi = 0;
  std::uint64_t lo = 0;
  friend constexpr bool operator==(const StreamKey&, const StreamKey&) = default;
};

// One element of a derivation label tuple. Integer and string labels hash
// into disjoint families, so {1} and {"1"} derive different keys.
class SeedLabel {
 public:
  constexpr SeedLabel(std::uint64_t v) : value_(detail::mix64(v ^ detail::kIntTag)) {}
  constexpr SeedLabel(int v)
      : SeedLabel(static_cast<std::uint64_t>(static_cast<std::int64_t>(v))) {}
  constexpr SeedLabel(std::int64_t v) : SeedLabel(static_cast<std::uint64_t>(v)) {}
  constexpr SeedLabel(std::string_view s)
      : value_(detail::mix64(detail::fnv1a(s) ^ detail::kStrTag)) {}
  constexpr SeedLabel(const char* s) : SeedLabel(std::string_view(s)) {}

  constexpr std::uint64_t value() const { return value_; }

 private:
  std::uint64_t value_;
};

// Absorbs one label into a key. Both words of the parent key and the label
// feed the new key, so tuples that share a prefix still separate.
constexpr StreamKey derive(StreamKey key, SeedLabel label) {
  const std::uint64_t a = detail::mix64(key.lo ^ label.value() ^ 0xa0761d6478bd642full);
  const std::uint64_t b = detail::mix64(key.hi ^ a ^ 0xe7037ed1a0b428dbull);
  return StreamKey{b, detail::mix64(a + b + key.lo)};
}

template <typename... Rest>
constexpr StreamKey derive(StreamKey key, SeedLabel first, SeedLabel second, Rest... rest) {
  return derive(derive(key, first), second, rest...);
}

// Root key for a master seed and label tuple; identical inputs give
// identical keys on every platform. The empty tuple is valid.
constexpr StreamKey seed_derive(std::uint64_t master, std::span<const SeedLabel> labels) {
  StreamKey key{detail::mix64(master ^ detail::kGolden), detail::mix64(master + detail::kGolden)};
  for (const SeedLabel& label : labels) key = derive(key, label);
  return key;
}

inline StreamKey seed_derive(std::uint64_t master, std::initializer_list<SeedLabel> labels = {}) {
  return seed_derive(master, std::span<const SeedLabel>(labels.begin(), labels.size()));
}

// Counter-based generator: output i is a pure function of (key, i), so
// streams are reproducible and independent of scheduling or interleaving.
class RandomStream {
 public:
  RandomStream() = default;
  explicit RandomStream(StreamKey key) : key_(key) {}

  std::uint64_t next_u64() {
    const std::uint64_t z = key_.lo + counter_++ * detail::kGolden;
    return detail::mix64(z ^ key_.hi);
  }

  // Uniform on the open interval (0,1) with 53-bit resolution; never
  // exactly 0 or 1, so strict CDF comparisons cannot tie.
  double next_unit() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  const StreamKey& key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  StreamKey key_{};
  std::uint64_t counter_ = 0;
};

// First index whose cumulative weight exceeds u * total, for cdf holding
// running sums of nonnegative weights with cdf.back() > 0 and u in (0,1).
// Zero-weight entries can never be returned.
inline std::size_t pick_from_cdf(std::span<const double> cdf, double u) {
  const double target = u * cdf.back();
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), target);
  if (it == cdf.end()) {
    // u * total rounded up to the total itself; take the last entry that
    // carries positive weight.
    std::size_t j = cdf.size() - 1;
    while (j > 0 && cdf[j - 1] == cdf[j]) --j;
    return j;
  }
  return static_cast<std::size_t>(it - cdf.begin());
}

}  // namespace csmc
