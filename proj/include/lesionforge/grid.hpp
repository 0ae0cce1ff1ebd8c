#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <vector>

#include "lesionforge/errors.hpp"

namespace lesionforge {

using Dims3 = Eigen::Array3i;
using Coord3 = Eigen::Array3i;
using Spacing3 = Eigen::Array3d;

/// Inclusive voxel box.
struct Box3 {
  Coord3 lo{0, 0, 0};
  Coord3 hi{-1, -1, -1};

  bool empty() const { return (hi < lo).any(); }
  Dims3 extent() const { return hi - lo + 1; }
  bool contains(const Coord3& p) const {
    return (p >= lo).all() && (p <= hi).all();
  }
  /// Grow by `pad` voxels on every face, clamped to [0, dims).
  Box3 padded_clamped(int pad, const Dims3& dims) const {
    Box3 b;
    b.lo = (lo - pad).max(Coord3::Zero());
    b.hi = (hi + pad).min(dims - 1);
    return b;
  }
};

// Dense scalar grid on an anisotropic voxel lattice. Storage is a flat Eigen
// array, x fastest (flat = x + dims.x * (y + dims.y * z)). Values are
// immutable in all public pipeline operations: functions take grids by const
// reference and return new ones.
template <typename Scalar>
class Grid3 {
 public:
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Grid3() : dims_(0, 0, 0), spacing_(1.0, 1.0, 1.0) {}

  Grid3(const Dims3& dims, const Spacing3& spacing, Scalar fill = Scalar(0))
      : dims_(dims), spacing_(spacing) {
    if ((dims_ <= 0).any())
      throw ShapeError("Grid3: dims must be positive");
    if (!(spacing_ > 0.0).all() || !spacing_.isFinite().all())
      throw ShapeError("Grid3: spacing must be strictly positive and finite");
    data_ = Storage::Constant(static_cast<Eigen::Index>(dims_[0]) * dims_[1] * dims_[2], fill);
  }

  const Dims3& dims() const { return dims_; }
  const Spacing3& spacing() const { return spacing_; }
  Eigen::Index size() const { return data_.size(); }

  Storage& data() { return data_; }
  const Storage& data() const { return data_; }

  Eigen::Index flat_index(int x, int y, int z) const {
    return x + static_cast<Eigen::Index>(dims_[0]) * (y + static_cast<Eigen::Index>(dims_[1]) * z);
  }

  Scalar& operator()(int x, int y, int z) { return data_[flat_index(x, y, z)]; }
  Scalar operator()(int x, int y, int z) const { return data_[flat_index(x, y, z)]; }

  Scalar& operator()(const Coord3& p) { return data_[flat_index(p[0], p[1], p[2])]; }
  Scalar operator()(const Coord3& p) const { return data_[flat_index(p[0], p[1], p[2])]; }

  bool in_bounds(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < dims_[0] && y < dims_[1] && z < dims_[2];
  }
  bool in_bounds(const Coord3& p) const { return in_bounds(p[0], p[1], p[2]); }

  Coord3 coord(Eigen::Index flat) const {
    const int x = static_cast<int>(flat % dims_[0]);
    const int y = static_cast<int>((flat / dims_[0]) % dims_[1]);
    const int z = static_cast<int>(flat / (static_cast<Eigen::Index>(dims_[0]) * dims_[1]));
    return Coord3(x, y, z);
  }

  double voxel_volume_mm3() const { return spacing_.prod(); }

  bool same_dims(const Grid3& other) const { return (dims_ == other.dims_).all(); }
  bool same_geometry(const Grid3& other) const {
    return same_dims(other) && (spacing_ == other.spacing_).all();
  }

 private:
  Dims3 dims_;
  Spacing3 spacing_;
  Storage data_;
};

using Volume3D = Grid3<float>;    // scalar intensities
using LabelMask = Grid3<int32_t>; // non-negative integer labels
using SoftMask = Grid3<float>;    // mixing weights in {0, 0.66, 1}

/// Weight given to lesion-boundary voxels when blending a placed lesion.
inline constexpr float kBoundarySoftWeight = 0.66f;
inline constexpr float kInteriorSoftWeight = 1.0f;

template <typename A, typename B>
inline void require_same_dims(const Grid3<A>& a, const Grid3<B>& b, const char* op) {
  if (!(a.dims() == b.dims()).all())
    throw ShapeError(std::string(op) + ": operand dims differ");
}

/// Voxelwise convex blend: out = base*(1-w) + overlay*w. Voxels with w == 0
/// are copied from base untouched, so an all-zero weight field is a bitwise
/// identity.
inline Volume3D elementwise_mix(const Volume3D& base, const Volume3D& overlay,
                                const SoftMask& weights) {
  require_same_dims(base, overlay, "elementwise_mix");
  require_same_dims(base, weights, "elementwise_mix");
  Volume3D out(base.dims(), base.spacing());
  const auto& b = base.data();
  const auto& f = overlay.data();
  const auto& w = weights.data();
  out.data() = (w == 0.0f).select(b, b * (1.0f - w) + f * w);
  return out;
}

/// Binarize a label grid: 1 where the label equals `lesion_class_id`, else 0.
inline LabelMask binarize(const LabelMask& labels, int32_t lesion_class_id = 1) {
  LabelMask out(labels.dims(), labels.spacing());
  out.data() = (labels.data() == lesion_class_id).cast<int32_t>();
  return out;
}

/// Set union of two binary masks (any nonzero voxel counts).
inline LabelMask mask_union(const LabelMask& base, const LabelMask& placed) {
  require_same_dims(base, placed, "mask_union");
  LabelMask out(base.dims(), base.spacing());
  out.data() = ((base.data() != 0) || (placed.data() != 0)).cast<int32_t>();
  return out;
}

/// Set difference base \ removed. `removed` must be a subset of `base`.
inline LabelMask mask_subtract(const LabelMask& base, const LabelMask& removed) {
  require_same_dims(base, removed, "mask_subtract");
  if (((removed.data() != 0) && (base.data() == 0)).any())
    throw ContractError("mask_subtract: removed mask is not a subset of base");
  LabelMask out(base.dims(), base.spacing());
  out.data() = ((base.data() != 0) && (removed.data() == 0)).cast<int32_t>();
  return out;
}

inline Eigen::Index count_nonzero(const LabelMask& mask) {
  return (mask.data() != 0).count();
}

/// 6-connectivity erosion residue: a mask voxel belongs to the shell iff at
/// least one face neighbor is outside the mask. Grid borders count as outside.
inline LabelMask boundary_shell(const LabelMask& mask) {
  LabelMask out(mask.dims(), mask.spacing());
  const Dims3 d = mask.dims();
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x) {
        if (mask(x, y, z) == 0) continue;
        const bool open =
            x == 0 || mask(x - 1, y, z) == 0 || x == d[0] - 1 || mask(x + 1, y, z) == 0 ||
            y == 0 || mask(x, y - 1, z) == 0 || y == d[1] - 1 || mask(x, y + 1, z) == 0 ||
            z == 0 || mask(x, y, z - 1) == 0 || z == d[2] - 1 || mask(x, y, z + 1) == 0;
        if (open) out(x, y, z) = 1;
      }
  return out;
}

/// Dilate a binary mask by one voxel with face (6) connectivity.
inline LabelMask dilate6(const LabelMask& mask) {
  LabelMask out = mask;
  const Dims3 d = mask.dims();
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x) {
        if (mask(x, y, z) == 0) continue;
        if (x > 0) out(x - 1, y, z) = 1;
        if (x < d[0] - 1) out(x + 1, y, z) = 1;
        if (y > 0) out(x, y - 1, z) = 1;
        if (y < d[1] - 1) out(x, y + 1, z) = 1;
        if (z > 0) out(x, y, z - 1) = 1;
        if (z < d[2] - 1) out(x, y, z + 1) = 1;
      }
  return out;
}

/// Blend weights for a placed lesion: 0.66 on the boundary shell, 1 strictly
/// inside, 0 elsewhere.
inline SoftMask soft_mask_from(const LabelMask& mask) {
  const LabelMask shell = boundary_shell(mask);
  SoftMask out(mask.dims(), mask.spacing());
  out.data() = (mask.data() != 0)
                   .select((shell.data() != 0)
                               .select(SoftMask::Storage::Constant(mask.size(), kBoundarySoftWeight),
                                       SoftMask::Storage::Constant(mask.size(), kInteriorSoftWeight)),
                           SoftMask::Storage::Zero(mask.size()));
  return out;
}

/// Tight bounding box of the nonzero voxels; empty box for an empty mask.
inline Box3 tight_bbox(const LabelMask& mask) {
  Box3 box;
  box.lo = mask.dims();
  box.hi = Coord3(-1, -1, -1);
  const Dims3 d = mask.dims();
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x)
        if (mask(x, y, z) != 0) {
          box.lo = box.lo.min(Coord3(x, y, z));
          box.hi = box.hi.max(Coord3(x, y, z));
        }
  return box;
}

/// Copy the subgrid covered by `box` (inclusive); spacing is preserved.
template <typename Scalar>
Grid3<Scalar> crop(const Grid3<Scalar>& grid, const Box3& box) {
  if (box.empty() || (box.lo < 0).any() || (box.hi >= grid.dims()).any())
    throw ContractError("crop: box out of bounds or empty");
  Grid3<Scalar> out(box.extent(), grid.spacing());
  for (int z = box.lo[2]; z <= box.hi[2]; ++z)
    for (int y = box.lo[1]; y <= box.hi[1]; ++y)
      for (int x = box.lo[0]; x <= box.hi[0]; ++x)
        out(x - box.lo[0], y - box.lo[1], z - box.lo[2]) = grid(x, y, z);
  return out;
}

namespace detail {

/// 1D Gaussian taps covering at least +-3*sigma (radius ceil(3*sigma), at
/// least 1), normalized to sum 1.
inline std::vector<double> gaussian_kernel_1d(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma - 1e-12)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int t = -radius; t <= radius; ++t) {
    const double v = std::exp(-0.5 * (t * t) / (sigma * sigma));
    k[t + radius] = v;
    sum += v;
  }
  for (double& v : k) v /= sum;
  return k;
}

inline int gaussian_kernel_radius(double sigma) {
  return std::max(1, static_cast<int>(std::ceil(3.0 * sigma - 1e-12)));
}

}  // namespace detail

/// Separable Gaussian blur; kernel truncated at 3*sigma, taps normalized to
/// sum 1, borders handled by edge replication. Accumulation runs in double
/// regardless of the grid scalar.
template <typename Scalar>
Grid3<Scalar> gaussian_blur_3d(const Grid3<Scalar>& vol, double sigma_voxels) {
  if (!(sigma_voxels > 0.0) || !std::isfinite(sigma_voxels))
    throw ContractError("gaussian_blur_3d: sigma must be positive and finite");
  const std::vector<double> kernel = detail::gaussian_kernel_1d(sigma_voxels);
  const int radius = static_cast<int>(kernel.size() / 2);
  const Dims3 d = vol.dims();
  const Eigen::Index n = vol.size();

  std::vector<double> cur(static_cast<size_t>(n)), next(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) cur[static_cast<size_t>(i)] = static_cast<double>(vol.data()[i]);

  const auto line_pass = [&](int axis) {
    const Eigen::Index stride =
        axis == 0 ? 1 : (axis == 1 ? d[0] : static_cast<Eigen::Index>(d[0]) * d[1]);
    const int len = d[axis];
    const int o1 = (axis + 1) % 3;
    const int o2 = (axis + 2) % 3;
    const Eigen::Index stride1 =
        o1 == 0 ? 1 : (o1 == 1 ? d[0] : static_cast<Eigen::Index>(d[0]) * d[1]);
    const Eigen::Index stride2 =
        o2 == 0 ? 1 : (o2 == 1 ? d[0] : static_cast<Eigen::Index>(d[0]) * d[1]);
    for (int j = 0; j < d[o2]; ++j)
      for (int i = 0; i < d[o1]; ++i) {
        const Eigen::Index base = i * stride1 + j * stride2;
        for (int p = 0; p < len; ++p) {
          double acc = 0.0;
          for (int t = -radius; t <= radius; ++t) {
            int q = p + t;
            q = q < 0 ? 0 : (q >= len ? len - 1 : q);  // edge replication
            acc += kernel[static_cast<size_t>(t + radius)] * cur[static_cast<size_t>(base + q * stride)];
          }
          next[static_cast<size_t>(base + p * stride)] = acc;
        }
      }
    cur.swap(next);
  };

  line_pass(0);
  line_pass(1);
  line_pass(2);

  Grid3<Scalar> out(d, vol.spacing());
  for (Eigen::Index i = 0; i < n; ++i) out.data()[i] = static_cast<Scalar>(cur[static_cast<size_t>(i)]);
  return out;
}

}  // namespace lesionforge
