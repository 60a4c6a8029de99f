#pragma once

// Philox4x32-10 counter-based generator (Salmon et al., SC'11) and the
// stream layout used by the simulator.
//
// A stream is identified by (seed, path, substream). Block b of a stream is
//   philox(counter = {b_lo, b_hi, path, substream}, key = {seed_lo, seed_hi})
// and yields four 32-bit words consumed in order. Derived variates:
//   uniform  = ((w0 >> 5) * 2^26 + (w1 >> 6)) / 2^53           in [0, 1)
//   normal   = Box-Muller on (1 - U1, U2), both outputs used, cos first
//   exp(r)   = -log(1 - U) / r
// Any implementation following this layout reproduces the same draws.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace mvhmm {

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

inline PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) {
  constexpr std::uint32_t kMul0 = 0xD2511F53u;
  constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t prod0 = std::uint64_t{kMul0} * ctr[0];
    const std::uint64_t prod1 = std::uint64_t{kMul1} * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(prod0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(prod0);
    const auto hi1 = static_cast<std::uint32_t>(prod1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(prod1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

/// Named substreams of one simulated path.
enum class Substream : std::uint32_t { Regime = 0, Increments = 1, Scratch = 2 };

class PhiloxStream {
 public:
  using result_type = std::uint32_t;

  PhiloxStream(std::uint64_t seed, std::uint64_t path, Substream sub = Substream::Scratch)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        path_(static_cast<std::uint32_t>(path)),
        sub_(static_cast<std::uint32_t>(sub)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (pos_ == 4) {
      buf_ = philox4x32_10({static_cast<std::uint32_t>(block_),
                            static_cast<std::uint32_t>(block_ >> 32), path_, sub_},
                           key_);
      ++block_;
      pos_ = 0;
    }
    return buf_[pos_++];
  }

  double uniform() {
    const std::uint64_t a = (*this)() >> 5;
    const std::uint64_t b = (*this)() >> 6;
    return static_cast<double>(a * 67108864u + b) * 0x1.0p-53;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  double exponential(double rate) { return -std::log(1.0 - uniform()) / rate; }

  /// Rademacher +-1 (mean 0, variance 1).
  double sign() { return ((*this)() & 1u) ? 1.0 : -1.0; }

 private:
  PhiloxKey key_;
  std::uint32_t path_;
  std::uint32_t sub_;
  std::uint64_t block_ = 0;
  PhiloxCounter buf_{};
  int pos_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mvhmm
