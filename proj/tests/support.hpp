#pragma once

#include <unistd.h>

#include <bit>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "fisale/autodiff.hpp"
#include "fisale/data_io.hpp"
#include "fisale/geometry.hpp"
#include "fisale/tensor.hpp"

namespace fisale::test {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.storage()) v = u(rng);
  return t;
}

inline std::size_t random_size(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::size_t counter = 0;
    path_ =
        std::filesystem::temp_directory_path() /
        ("fisale_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline DomainObservation random_observation(std::size_t n, std::size_t d, std::size_t c, Rng& rng) {
  return DomainObservation{random_tensor({n, d}, rng, -1.5, 1.5), random_tensor({n, c}, rng)};
}

inline SystemState random_system(std::size_t d, std::array<std::size_t, 3> counts, std::size_t cf,
                                 std::size_t cs, Rng& rng) {
  SystemState s;
  s.fluid = random_observation(counts[0], d, cf, rng);
  s.solid = random_observation(counts[1], d, cs, rng);
  s.interface = random_observation(counts[2], d, cf + cs, rng);
  return s;
}

/// Finite f32 value drawn from raw bit patterns, with extra weight on
/// subnormals, signed zeros and extremes.
inline double random_f32(Rng& rng) {
  std::uniform_int_distribution<std::uint32_t> bits;
  const std::uint32_t sign = bits(rng) & 0x80000000u;
  std::uint32_t pattern = 0;
  switch (bits(rng) % 8) {
    case 0:
      pattern = sign;
      break;  // +-0
    case 1:
      pattern = sign | (1u + bits(rng) % 0x7FFFFFu);
      break;  // subnormal
    case 2:
      pattern = sign | 0x7F7FFFFFu;
      break;  // largest finite
    case 3:
      pattern = sign | 0x00800000u;
      break;  // smallest normal
    default:
      do {
        pattern = bits(rng);
      } while ((pattern & 0x7F800000u) == 0x7F800000u);
  }
  return static_cast<double>(std::bit_cast<float>(pattern));
}

/// Trajectory whose every payload value is exactly representable in f32.
inline Trajectory random_f32_trajectory(Rng& rng, const std::string& id) {
  const std::size_t d = random_size(rng, 1, 3), frames = random_size(rng, 1, 4);
  const std::size_t nf = random_size(rng, 1, 9), ns = random_size(rng, 1, 5),
                    nb = random_size(rng, 1, 4);
  const std::size_t cf = random_size(rng, 1, 3), cs = random_size(rng, 1, 3);
  Trajectory t;
  t.id = id;
  for (std::size_t f = 0; f < frames; ++f) {
    SystemState s;
    const std::array<std::size_t, 3> counts{nf, ns, nb};
    const std::array<std::size_t, 3> channels{cf, cs, cf + cs};
    for (std::size_t k = 0; k < 3; ++k) {
      auto& obs = s.domain(kDomains[k]);
      obs.positions = Tensor({counts[k], d});
      obs.quantities = Tensor({counts[k], channels[k]});
      for (double& v : obs.positions.storage()) v = random_f32(rng);
      for (double& v : obs.quantities.storage()) v = random_f32(rng);
    }
    t.frames.push_back(std::move(s));
  }
  return t;
}

/// True when both tensors hold the same bit patterns.
inline bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  }
  return true;
}

inline bool bit_equal(const Trajectory& a, const Trajectory& b) {
  if (a.frames.size() != b.frames.size()) return false;
  for (std::size_t f = 0; f < a.frames.size(); ++f) {
    for (auto dom : kDomains) {
      if (!bit_equal(a.frames[f].domain(dom).positions, b.frames[f].domain(dom).positions) ||
          !bit_equal(a.frames[f].domain(dom).quantities, b.frames[f].domain(dom).quantities)) {
        return false;
      }
    }
  }
  return true;
}

}  // namespace fisale::test
