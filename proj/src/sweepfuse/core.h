#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace sweepfuse {

struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& m) : std::runtime_error(m) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& m) : std::runtime_error(m) {}
};

template <typename T>
struct Image {
  int h = 0, w = 0;
  std::vector<T> v;

  Image() = default;
  Image(int h_, int w_, T fill = T()) : h(h_), w(w_), v(size_t(h_) * size_t(w_), fill) {}

  T& at(int y, int x) { return v[size_t(y) * w + x]; }
  const T& at(int y, int x) const { return v[size_t(y) * w + x]; }
  bool empty() const { return v.empty(); }
  bool same_size(int hh, int ww) const { return h == hh && w == ww; }
  template <typename U>
  bool same_size(const Image<U>& o) const { return h == o.h && w == o.w; }
};

// splitmix64: stable across platforms, unlike the std:: distributions.
struct Rng {
  uint64_t state;
  explicit Rng(uint64_t seed) : state(seed) {}

  uint64_t next() {
    state += 0x9e3779b97f4a7c15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  double uniform() { return double(next() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
  int uniform_int(int n) { return int(next() % uint64_t(n)); }
  // Random multiple of 2^-10 in [a, b); a, b must be multiples of 2^-10.
  double dyadic(double a, double b) {
    int64_t lo = int64_t(a * 1024.0), hi = int64_t(b * 1024.0);
    return double(lo + int64_t(next() % uint64_t(hi - lo))) * 0x1.0p-10;
  }
};

inline int default_threads() {
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : int(std::min(8u, hc));
}

// Runs fn(i) for i in [0, n) split into contiguous chunks across threads;
// threads <= 0 picks the default. Items must be independent; chunking never
// affects per-item results.
template <typename Fn>
void parallel_for(int64_t n, int threads, Fn&& fn) {
  if (n <= 0) return;
  if (threads <= 0) threads = default_threads();
  int workers = int(std::min<int64_t>(threads, n));
  if (workers == 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  int64_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    int64_t lo = w * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (int64_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace sweepfuse
