#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nlpl {

/// Input that violates a documented precondition or type invariant.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or non-strict configuration (unknown keys, wrong types).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A computation that could not produce a trustworthy result
/// (non-finite state, persistent invariant violation, exhausted budget).
class NumericFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Worker count used by data-parallel reductions. Results never depend on it.
void set_thread_count(unsigned n);
unsigned thread_count();

/// Pairwise (fixed-tree) summation.
double pairwise_sum(std::span<const double> values);

/// Sums f(begin, end) over fixed-size chunks of [0, n); chunk partials are
/// combined with pairwise_sum, so the result is independent of the worker count.
double deterministic_reduce(std::size_t n, std::size_t chunk,
                            const std::function<double(std::size_t, std::size_t)>& f);

/// Runs f(begin, end) over disjoint chunks of [0, n) on the configured workers.
void parallel_for(std::size_t n, std::size_t chunk,
                  const std::function<void(std::size_t, std::size_t)>& f);

/// Counter-based generator: the k-th draw of (seed, stream) is a pure hash of
/// (seed, stream, k), so sharded sampling is reproducible for any worker count.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64();
  double uniform();          // [0, 1)
  double uniform_open();     // (0, 1)
  double normal();
  void unit_ball(std::span<double> out);  // uniform in the closed unit ball

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Volume of the Euclidean unit ball in R^d.
double unit_ball_volume(int d);

double norm2(std::span<const double> x);

/// Running mean/variance accumulator that merges in a fixed order.
struct MomentAccumulator {
  std::uint64_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x);
  void merge(const MomentAccumulator& other);
  double variance() const;
  double standard_error() const;
};

/// Mean and standard error of `samples` draws, sharded over fixed-size blocks;
/// draw(rng) is called with a shard-local generator seeded by (seed, shard).
MomentAccumulator sharded_monte_carlo(std::uint64_t samples, std::uint64_t seed,
                                      const std::function<double(CounterRng&)>& draw);

/// Shortest round-trip-safe formatting with 17 significant digits, '.' decimal.
std::string format_double(double v);

}  // namespace nlpl
