#pragma once

#include <atomic>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace gsmooth {

// All randomness flows through explicitly seeded engines. Parallel work
// derives one independent stream per (seed, stream_id) pair so results do
// not depend on thread scheduling.
using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream_id = 0) {
  return Rng(splitmix64(splitmix64(seed) ^ splitmix64(stream_id + 1)));
}

class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Index-based parallel map. Work item i writes only to slot i of whatever
// the caller owns, so the result is identical for any worker count.
template <typename Fn>
void parallel_for(int n, int workers, Fn&& fn) {
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int>* next = new std::atomic<int>(0);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&fn, n, next] {
      for (;;) {
        int i = next->fetch_add(1);
        if (i >= n) break;
        fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
  delete next;
}

inline int default_workers() {
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

}  // namespace gsmooth
