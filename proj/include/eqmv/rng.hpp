#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <span>
#include <thread>
#include <vector>

namespace eqmv {

/// Philox4x32-10 counter-based generator. A stream is addressed by
/// (seed, purpose, stream id) and is stateless apart from its draw counter,
/// so any path's randomness can be regenerated independently of scheduling.
struct Philox4x32 {
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  struct Block {
    std::uint32_t v[4];
  };

  static Block generate(std::uint32_t c0, std::uint32_t c1, std::uint32_t c2,
                        std::uint32_t c3, std::uint32_t k0, std::uint32_t k1) {
    std::uint32_t x0 = c0, x1 = c1, x2 = c2, x3 = c3;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * x0;
      const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * x2;
      const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
      const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
      const std::uint32_t y0 = hi1 ^ x1 ^ k0;
      const std::uint32_t y1 = lo1;
      const std::uint32_t y2 = hi0 ^ x3 ^ k1;
      const std::uint32_t y3 = lo0;
      x0 = y0;
      x1 = y1;
      x2 = y2;
      x3 = y3;
      k0 += kWeyl0;
      k1 += kWeyl1;
    }
    return Block{{x0, x1, x2, x3}};
  }
};

namespace purpose {
inline constexpr std::uint32_t kSimulation = 1;
inline constexpr std::uint32_t kFactor = 2;
inline constexpr std::uint32_t kSpikeOuter = 3;
inline constexpr std::uint32_t kSpikeInner = 4;
}  // namespace purpose

/// Sequence of i.i.d. N(0,1) draws for one (seed, purpose, stream) triple.
/// Draw j of a stream is a pure function of the triple and j.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint32_t purpose_tag, std::uint64_t stream_id)
      : k0_(static_cast<std::uint32_t>(seed)),
        k1_(static_cast<std::uint32_t>(seed >> 32)),
        c0_(purpose_tag),
        c1_(static_cast<std::uint32_t>(stream_id)),
        c2_(static_cast<std::uint32_t>(stream_id >> 32)) {}

  double next() {
    if (!have_spare_) {
      const auto b = Philox4x32::generate(c0_, c1_, c2_, block_++, k0_, k1_);
      const double u1 = to_unit_positive(b.v[0], b.v[1]);
      const double u2 = to_unit(b.v[2], b.v[3]);
      const double radius = std::sqrt(-2.0 * std::log(u1));
      const double angle = 2.0 * std::numbers::pi * u2;
      spare_ = radius * std::sin(angle);
      have_spare_ = true;
      return radius * std::cos(angle);
    }
    have_spare_ = false;
    return spare_;
  }

 private:
  // 53-bit uniform in (0,1]; never 0 so log() is safe.
  static double to_unit_positive(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32) | lo;
    return static_cast<double>((bits >> 11) + 1) * 0x1.0p-53;
  }
  static double to_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32) | lo;
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
  }

  std::uint32_t k0_, k1_, c0_, c1_, c2_;
  std::uint32_t block_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

/// Fixed-order pairwise summation; the result does not depend on how the
/// values were produced (worker count, chunking).
inline double pairwise_sum(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(values.subspan(0, half)) + pairwise_sum(values.subspan(half));
}

/// Static-chunked parallel loop. Chunk boundaries depend only on n, so any
/// function writing results indexed by iteration is scheduling-independent.
inline void parallel_for(std::size_t n, int threads,
                         const std::function<void(std::size_t, std::size_t)>& body) {
  if (threads <= 1 || n < 2048) {
    body(0, n);
    return;
  }
  const std::size_t chunk = 4096;
  std::vector<std::thread> pool;
  std::atomic<std::size_t> cursor{0};
  const int workers = std::min<std::size_t>(threads, (n + chunk - 1) / chunk);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t begin = cursor.fetch_add(chunk);
        if (begin >= n) break;
        body(begin, std::min(begin + chunk, n));
      }
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace eqmv
