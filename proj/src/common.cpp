#include "nlpl/common.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <numbers>
#include <thread>

namespace nlpl {

namespace {

std::atomic<unsigned> g_threads{1};
thread_local bool t_in_worker = false;

constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double pairwise_sum_impl(const double* v, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += v[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum_impl(v, half) + pairwise_sum_impl(v + half, n - half);
}

constexpr std::uint64_t kMonteCarloShard = 1ULL << 16;

}  // namespace

void set_thread_count(unsigned n) { g_threads.store(std::max(1u, n)); }
unsigned thread_count() { return g_threads.load(); }

double pairwise_sum(std::span<const double> values) {
  return pairwise_sum_impl(values.data(), values.size());
}

void parallel_for(std::size_t n, std::size_t chunk,
                  const std::function<void(std::size_t, std::size_t)>& f) {
  if (n == 0) return;
  chunk = std::max<std::size_t>(chunk, 1);
  const std::size_t chunks = (n + chunk - 1) / chunk;
  const unsigned workers =
      t_in_worker ? 1u : static_cast<unsigned>(std::min<std::size_t>(thread_count(), chunks));
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) f(c * chunk, std::min(n, (c + 1) * chunk));
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      t_in_worker = true;  // nested loops run serially
      for (std::size_t c = next++; c < chunks; c = next++) f(c * chunk, std::min(n, (c + 1) * chunk));
    });
  }
}

double deterministic_reduce(std::size_t n, std::size_t chunk,
                            const std::function<double(std::size_t, std::size_t)>& f) {
  if (n == 0) return 0.0;
  chunk = std::max<std::size_t>(chunk, 1);
  const std::size_t chunks = (n + chunk - 1) / chunk;
  std::vector<double> partial(chunks, 0.0);
  parallel_for(chunks, 1, [&](std::size_t b, std::size_t e) {
    for (std::size_t c = b; c < e; ++c) partial[c] = f(c * chunk, std::min(n, (c + 1) * chunk));
  });
  return pairwise_sum(partial);
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream)
    : key_(splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632BE59BD9B4E019ULL))) {}

std::uint64_t CounterRng::next_u64() { return splitmix64(key_ + splitmix64(counter_++)); }

double CounterRng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double CounterRng::uniform_open() {
  return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52;
}

double CounterRng::normal() {
  const double u1 = uniform_open();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void CounterRng::unit_ball(std::span<double> out) {
  const std::size_t d = out.size();
  if (d == 1) {
    out[0] = 2.0 * uniform() - 1.0;
    return;
  }
  double r2 = 0.0;
  do {
    r2 = 0.0;
    for (auto& v : out) {
      v = normal();
      r2 += v * v;
    }
  } while (r2 == 0.0);
  const double scale = std::pow(uniform(), 1.0 / static_cast<double>(d)) / std::sqrt(r2);
  for (auto& v : out) v *= scale;
}

double unit_ball_volume(int d) {
  const double half = 0.5 * d;
  return std::pow(std::numbers::pi, half) / std::tgamma(half + 1.0);
}

double norm2(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

void MomentAccumulator::add(double x) {
  ++count;
  const double delta = x - mean;
  mean += delta / static_cast<double>(count);
  m2 += delta * (x - mean);
}

void MomentAccumulator::merge(const MomentAccumulator& other) {
  if (other.count == 0) return;
  if (count == 0) {
    *this = other;
    return;
  }
  const double n1 = static_cast<double>(count);
  const double n2 = static_cast<double>(other.count);
  const double delta = other.mean - mean;
  const double total = n1 + n2;
  mean += delta * n2 / total;
  m2 += other.m2 + delta * delta * n1 * n2 / total;
  count += other.count;
}

double MomentAccumulator::variance() const {
  return count > 1 ? m2 / static_cast<double>(count - 1) : 0.0;
}

double MomentAccumulator::standard_error() const {
  return count > 1 ? std::sqrt(variance() / static_cast<double>(count)) : 0.0;
}

MomentAccumulator sharded_monte_carlo(std::uint64_t samples, std::uint64_t seed,
                                      const std::function<double(CounterRng&)>& draw) {
  if (samples == 0) throw InvalidInput("monte carlo needs at least one sample");
  const std::uint64_t shards = (samples + kMonteCarloShard - 1) / kMonteCarloShard;
  std::vector<MomentAccumulator> partial(shards);
  parallel_for(shards, 1, [&](std::size_t b, std::size_t e) {
    for (std::size_t s = b; s < e; ++s) {
      CounterRng rng(seed, s);
      const std::uint64_t begin = s * kMonteCarloShard;
      const std::uint64_t end = std::min(samples, begin + kMonteCarloShard);
      MomentAccumulator acc;
      for (std::uint64_t k = begin; k < end; ++k) acc.add(draw(rng));
      partial[s] = acc;
    }
  });
  // Fixed binary-tree merge.
  while (partial.size() > 1) {
    std::vector<MomentAccumulator> next((partial.size() + 1) / 2);
    for (std::size_t i = 0; i < next.size(); ++i) {
      next[i] = partial[2 * i];
      if (2 * i + 1 < partial.size()) next[i].merge(partial[2 * i + 1]);
    }
    partial.swap(next);
  }
  return partial.front();
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

}  // namespace nlpl
