// Synthetic volumes, masks and scratch directories shared by the test suites.
#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "lesionforge/grid.hpp"
#include "lesionforge/rng.hpp"

namespace fixtures {

using lesionforge::Coord3;
using lesionforge::Dims3;
using lesionforge::LabelMask;
using lesionforge::Spacing3;
using lesionforge::Volume3D;

/// Textured positive intensities (uniform in [lo, hi]); std is comfortably
/// nonzero so foreground statistics are well defined.
inline Volume3D textured_volume(const Dims3& dims, const Spacing3& spacing, uint64_t seed,
                                float lo = 50.0f, float hi = 150.0f) {
  Volume3D vol(dims, spacing);
  lesionforge::Rng rng(seed);
  for (Eigen::Index i = 0; i < vol.size(); ++i)
    vol.data()[i] = static_cast<float>(rng.uniform(lo, hi));
  return vol;
}

inline void add_ball(LabelMask& mask, const Coord3& center, double radius, int32_t label = 1) {
  const auto d = mask.dims();
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x) {
        const double dx = x - center[0], dy = y - center[1], dz = z - center[2];
        if (dx * dx + dy * dy + dz * dz <= radius * radius) mask(x, y, z) = label;
      }
}

inline void paint_ball(Volume3D& vol, const Coord3& center, double radius, float value) {
  const auto d = vol.dims();
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x) {
        const double dx = x - center[0], dy = y - center[1], dz = z - center[2];
        if (dx * dx + dy * dy + dz * dz <= radius * radius) vol(x, y, z) = value;
      }
}

inline LabelMask random_mask(const Dims3& dims, const Spacing3& spacing, uint64_t seed,
                             double fill = 0.3) {
  LabelMask mask(dims, spacing);
  lesionforge::Rng rng(seed);
  for (Eigen::Index i = 0; i < mask.size(); ++i)
    mask.data()[i] = rng.bernoulli(fill) ? 1 : 0;
  return mask;
}

/// Self-cleaning scratch directory under the system temp dir.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    const auto base = std::filesystem::temp_directory_path();
    std::random_device rd;
    for (int attempt = 0; attempt < 64; ++attempt) {
      auto candidate = base / (tag + "_" + std::to_string(rd()));
      std::error_code ec;
      if (std::filesystem::create_directory(candidate, ec)) {
        path_ = candidate;
        return;
      }
    }
    throw std::runtime_error("TempDir: could not create scratch directory");
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline std::vector<uint8_t> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::vector<uint8_t>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace fixtures
