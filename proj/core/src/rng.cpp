#include "rgcd/rng.hpp"

#include <numeric>

#include "rgcd/error.hpp"

namespace rgcd {

std::uint64_t mix64(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_key(std::uint64_t seed, Stream purpose, std::uint64_t step, std::uint64_t sub) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ static_cast<std::uint64_t>(purpose));
  h = mix64(h ^ step);
  return mix64(h ^ sub);
}

std::size_t StreamRng::index(std::size_t lo, std::size_t hi) {
  if (hi < lo) throw DomainError("StreamRng::index: empty range");
  std::uniform_int_distribution<std::size_t> dist(lo, hi);
  return dist(engine_);
}

ad::Array StreamRng::normal_array(ad::Shape shape, double stddev) {
  ad::Array a(std::move(shape));
  for (auto& v : a.values()) v = stddev * normal();
  return a;
}

std::vector<std::size_t> StreamRng::sample_without_replacement(std::size_t n, std::size_t count) {
  if (count > n) throw DomainError("cannot draw more items than the population holds");
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t j = index(i, n - 1);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

}  // namespace rgcd
