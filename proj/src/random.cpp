#include "otbayes/random.hpp"

namespace otbayes {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t tag_of(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t state = mix64(master);
  for (std::uint64_t t : tags) {
    state = mix64(state ^ mix64(t));
  }
  return state;
}

Rng make_rng(std::uint64_t seed) { return Rng(seed); }

double standard_normal(Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

Vector standard_normal(Rng& rng, Eigen::Index n) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = dist(rng);
  return v;
}

double uniform01(Rng& rng) {
  // 53 random bits mapped to [0, 1); avoids distribution implementation differences.
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace otbayes
