#pragma once

#include <cstdint>
#include <random>

namespace wonham {

/// Independent random streams used by the simulators. Each (master seed, path,
/// stream) triple maps to its own engine so that adding paths or streams never
/// perturbs existing ones.
enum class Stream : std::uint64_t {
  poisson = 1,
  marks = 2,
  uniforms = 3,
  brownian = 4,
  initial = 5,
};

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// seed(master, path, stream) = sm(sm(sm(master) ^ path) ^ stream), sm = splitmix64.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t path, Stream stream) noexcept {
  return splitmix64(splitmix64(splitmix64(master) ^ path) ^ static_cast<std::uint64_t>(stream));
}

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t master, std::uint64_t path, Stream stream) {
  return Engine(derive_seed(master, path, stream));
}

/// Uniform on the open interval (0,1).
inline double open_uniform(Engine& eng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double x = u(eng);
  while (x <= 0.0) x = u(eng);
  return x;
}

}  // namespace wonham
