#pragma once

#include <cstdint>
#include <limits>

namespace ictxot {

/// What a stream is used for. Each (seed, purpose, index) triple keys an
/// independent stream, so task draws, prompts, query draws and so on can be
/// varied one at a time.
enum class StreamPurpose : std::uint64_t {
  TaskDraw = 1,
  Prompt = 2,
  Queries = 3,
  Targets = 4,
  Init = 5,
  Eval = 6,
  Shuffle = 7,
  Check = 8,
};

/// Counter-based generator: output k is a SplitMix64 finalizer applied to
/// key + k·golden-gamma. Streams are cheap value types; copying one forks it.
class Stream {
 public:
  using result_type = std::uint64_t;

  Stream() = default;
  Stream(std::uint64_t seed, StreamPurpose purpose, std::uint64_t index = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return next_u64(); }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box–Muller; the second variate of each pair is cached.
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace ictxot
