#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <initializer_list>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

namespace sparseiv::rng {

using Engine = std::mt19937_64;

namespace detail {
inline std::vector<std::uint32_t> seed_words(std::uint64_t seed,
                                             std::initializer_list<std::uint64_t> path) {
  std::vector<std::uint32_t> words;
  words.reserve(2 * (path.size() + 1));
  auto push = [&](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (auto v : path) push(v);
  return words;
}
}  // namespace detail

/// Engine for the substream identified by (seed, path...). Streams with
/// different paths are statistically independent; the same path always
/// yields the same stream, regardless of which thread asks for it.
inline Engine substream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  const auto words = detail::seed_words(seed, path);
  std::seed_seq seq(words.begin(), words.end());
  return Engine(seq);
}

/// Derives a child seed from (seed, path...), for handing to another component.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  const auto words = detail::seed_words(seed, path);
  std::seed_seq seq(words.begin(), words.end());
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

/// Fills `out` with i.i.d. standard normals.
template <typename Derived>
void fill_normal(Engine& engine, Eigen::DenseBase<Derived>& out) {
  std::normal_distribution<typename Derived::Scalar> normal;
  for (Eigen::Index j = 0; j < out.cols(); ++j)
    for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, j) = normal(engine);
}

/// Runs body(i) for i in [0, count) on up to `jobs` threads. Callers must
/// write results into per-index slots so the outcome does not depend on the
/// schedule. The first exception thrown by any body is rethrown.
template <typename Body>
void parallel_for(std::size_t count, unsigned jobs, Body&& body) {
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  workers.reserve(jobs);
  for (unsigned w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace sparseiv::rng
