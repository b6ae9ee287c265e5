#pragma once

/*
 * Counter-based random streams.
 *
 * Every replicate of every simulation draws from its own Philox4x32-10
 * stream, keyed by (master seed, module id) and offset by the replicate
 * index. Results therefore depend only on the replicate index, never on
 * which worker thread ran it or in what order.
 */

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace crtprune {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Philox4x32 with 10 rounds (Salmon et al., SC'11), exposed as a 64-bit
/// UniformRandomBitGenerator.
class Philox4x32 {
public:
  using result_type = std::uint64_t;

  Philox4x32(std::uint64_t key, std::uint64_t stream) : key_{lo(key), hi(key)} {
    counter_[2] = lo(stream);
    counter_[3] = hi(stream);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (pos_ == 2) refill();
    return buffer_[pos_++];
  }

private:
  static constexpr std::uint32_t lo(std::uint64_t v) { return static_cast<std::uint32_t>(v); }
  static constexpr std::uint32_t hi(std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); }

  static void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& h, std::uint32_t& l) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    h = hi(p);
    l = lo(p);
  }

  void refill() {
    std::array<std::uint32_t, 4> x = counter_;
    std::array<std::uint32_t, 2> k = key_;
    for (int round = 0; round < 10; ++round) {
      std::uint32_t h0, l0, h1, l1;
      mulhilo(0xD2511F53u, x[0], h0, l0);
      mulhilo(0xCD9E8D57u, x[2], h1, l1);
      x = {h1 ^ x[1] ^ k[0], l1, h0 ^ x[3] ^ k[1], l0};
      k[0] += 0x9E3779B9u;
      k[1] += 0xBB67AE85u;
    }
    buffer_[0] = (static_cast<std::uint64_t>(x[1]) << 32) | x[0];
    buffer_[1] = (static_cast<std::uint64_t>(x[3]) << 32) | x[2];
    if (++counter_[0] == 0) ++counter_[1];
    pos_ = 0;
  }

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> counter_{};
  std::array<std::uint64_t, 2> buffer_{};
  int pos_ = 2;
};

using Rng = Philox4x32;

/// Stream for replicate `replicate` of module `module_id` under `master_seed`.
inline Rng make_stream(std::uint64_t master_seed, std::uint64_t module_id, std::uint64_t replicate) {
  return Rng(splitmix64(master_seed ^ splitmix64(module_id + 0x632BE59BD9B4E019ULL)), replicate);
}

/// Stable hash of a short tag, used as a module id.
inline constexpr std::uint64_t stream_tag(const char* s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (; *s; ++s) h = (h ^ static_cast<unsigned char>(*s)) * 0x100000001B3ULL;
  return h;
}

/// Uniform on the open interval (0,1), 53-bit resolution.
template <class G>
double uniform_open(G& g) {
  return (static_cast<double>(g() >> 11) + 0.5) * 0x1.0p-53;
}

template <class G>
double standard_normal(G& g) {
  // Box-Muller, one output per call so every draw consumes a fixed amount of
  // the stream.
  const double u1 = uniform_open(g);
  const double u2 = uniform_open(g);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

template <class G>
double standard_exponential(G& g) {
  return -std::log(uniform_open(g));
}

template <class G>
std::uint64_t poisson(G& g, double mean) {
  if (mean <= 0.0) return 0;
  if (mean < 30.0) {
    // Inversion by sequential search.
    const double u = uniform_open(g);
    double p = std::exp(-mean), cdf = p;
    std::uint64_t k = 0;
    while (u > cdf && k < 1000) {
      ++k;
      p *= mean / static_cast<double>(k);
      cdf += p;
    }
    return k;
  }
  std::poisson_distribution<std::uint64_t> dist(mean);
  return dist(g);
}

template <class G>
double gamma_variate(G& g, double shape, double scale) {
  std::gamma_distribution<double> dist(shape, scale);
  return dist(g);
}

}  // namespace crtprune
