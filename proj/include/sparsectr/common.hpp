#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace sparsectr {

// Thrown when tensor shapes are incompatible; the message names both shapes.
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Malformed input files, out-of-range ids, config/sample mismatches.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Diverged training, undefined metric, non-finite results.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Floating-point operation counter.
//
// Every tensor op adds its scalar-op count here when counting is enabled.
// Conventions (documented in the README): one add/mul/div/compare counts as
// one flop; exp, log, sqrt and trig calls count as one flop each. Attention
// score/mix work (QK^T products and probability-weighted value sums) is
// attributed to the `scores` bucket so it can be compared against the
// analytic cost expressions; everything else lands in `general`.
// ---------------------------------------------------------------------------

enum class FlopCategory { general, scores };

struct FlopCounter {
  bool enabled = false;
  double general = 0.0;
  double scores = 0.0;
  FlopCategory scope = FlopCategory::general;

  void add(double n) {
    if (!enabled) return;
    if (scope == FlopCategory::scores)
      scores += n;
    else
      general += n;
  }
  double total() const { return general + scores; }
  void reset() { general = scores = 0.0; }
};

inline FlopCounter& flop_counter() {
  thread_local FlopCounter counter;
  return counter;
}

// Scoped attribution of flops to a category.
class FlopScope {
 public:
  explicit FlopScope(FlopCategory cat) : prev_(flop_counter().scope) {
    flop_counter().scope = cat;
  }
  ~FlopScope() { flop_counter().scope = prev_; }
  FlopScope(const FlopScope&) = delete;
  FlopScope& operator=(const FlopScope&) = delete;

 private:
  FlopCategory prev_;
};

// Scoped enable/disable with automatic restore.
class FlopCounting {
 public:
  FlopCounting() : prev_(flop_counter().enabled) { flop_counter().enabled = true; }
  ~FlopCounting() { flop_counter().enabled = prev_; }
  FlopCounting(const FlopCounting&) = delete;
  FlopCounting& operator=(const FlopCounting&) = delete;

 private:
  bool prev_;
};

// ---------------------------------------------------------------------------
// Tensor buffer accounting: live bytes and the high-water mark. Used by the
// benchmark to report peak resident buffer bytes.
// ---------------------------------------------------------------------------

struct AllocStats {
  std::atomic<std::int64_t> live{0};
  std::atomic<std::int64_t> peak{0};

  void add(std::int64_t bytes) {
    std::int64_t now = live.fetch_add(bytes) + bytes;
    std::int64_t seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
  }
  void sub(std::int64_t bytes) { live.fetch_sub(bytes); }
  void reset_peak() { peak.store(live.load()); }
};

inline AllocStats& alloc_stats() {
  static AllocStats stats;
  return stats;
}

}  // namespace sparsectr
