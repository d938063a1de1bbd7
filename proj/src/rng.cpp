#include "fedeec/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace fedeec {

namespace {

// splitmix64: turns any 64-bit state into a well-mixed sequence.
std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t RngStream::next_u64() { return splitmix64(state_); }

double RngStream::uniform() {
  // 53 mantissa bits -> [0, 1)
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("RngStream::below: n == 0");
  // rejection sampling to stay unbiased
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double RngStream::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1, u2;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  have_spare_ = true;
  return r * std::cos(theta);
}

double RngStream::gamma(double shape) {
  if (shape <= 0.0) throw std::invalid_argument("RngStream::gamma: shape <= 0");
  if (shape < 1.0) {
    // boost: Gamma(a) = Gamma(a+1) * U^(1/a)
    const double g = gamma(shape + 1.0);
    double u;
    do {
      u = uniform();
    } while (u <= 0.0);
    return g * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::vector<double> RngStream::dirichlet_symmetric(double alpha, int k) {
  std::vector<double> w(static_cast<std::size_t>(k));
  double sum = 0.0;
  for (auto& x : w) {
    x = gamma(alpha);
    sum += x;
  }
  if (sum <= 0.0) {
    for (auto& x : w) x = 1.0 / k;
    return w;
  }
  for (auto& x : w) x /= sum;
  return w;
}

void RngStream::shuffle(std::vector<int>& v) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(below(i));
    std::swap(v[i - 1], v[j]);
  }
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t fnv1a_u64(std::uint64_t value, std::uint64_t h) {
  for (int i = 0; i < 8; ++i) {
    h ^= (value >> (8 * i)) & 0xffu;
    h *= 0x100000001b3ull;
  }
  return h;
}

RngStream derive_stream(std::uint64_t global_seed, std::string_view scope,
                        std::uint64_t index, std::string_view tag) {
  std::uint64_t h = fnv1a_u64(global_seed, 0xcbf29ce484222325ull);
  h = fnv1a(scope, h);
  h = fnv1a_u64(index, h);
  h = fnv1a(tag, h);
  return RngStream(h);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  return fnv1a(tag, fnv1a_u64(seed, 0xcbf29ce484222325ull));
}

}  // namespace fedeec
