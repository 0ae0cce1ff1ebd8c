#pragma once

#include <Eigen/Core>

#include <utility>

#include "lesionforge/grid.hpp"

namespace lesionforge::inpaint {

using Slice2D = Eigen::ArrayXXd;      // (x, y), x fastest (column-major)
using SliceMask2D = Eigen::ArrayXXi;  // nonzero = pixel to inpaint

/// Telea fast-marching inpainting of one 2D slice.
///
/// Masked pixels are filled in non-decreasing arrival-time order with the
/// normalized weighted average of first-order extrapolations from KNOWN
/// pixels within `radius_px`:
///
///   I(p) = sum_q w(p,q) [I(q) + grad I(q) . (p-q)] / sum_q w(p,q)
///   w = dir * dst * lev,  dir = max(<N, (p-q)/|p-q|>, 1e-6),
///   dst = 1/|p-q|^2,      lev = 1/(1 + |T(q)-T(p)|)
///
/// N is the normalized arrival-time gradient at p (falls back to dir = 1
/// when |grad T| < 1e-12). Image gradients use central differences over
/// KNOWN pixels, one-sided at KNOWN/unknown interfaces, zero with no valid
/// stencil. Arrival times come from a first-order upwind quadratic solve on
/// the 4-neighborhood. Unmasked pixels are returned unchanged.
Slice2D inpaint_slice(const Slice2D& slice, const SliceMask2D& mask2d, int radius_px = 5);

struct InpaintStats {
  long long removed_voxels = 0;
  int slices_touched = 0;
};

/// Remove one lesion: every axial (z) slice intersecting `lesion_mask` is
/// inpainted independently, then the result is blended with its Gaussian
/// blur on the one-voxel-dilated boundary shell of the lesion so the slices
/// join smoothly in z. The mask is updated by subtracting the lesion.
/// blur_sigma == 0 skips the blend. Voxels outside the lesion and the
/// dilated shell are bit-identical to the input.
std::pair<Volume3D, LabelMask> inpaint_lesion(const Volume3D& image, const LabelMask& lesion_mask,
                                              const LabelMask& full_mask, int radius_px = 5,
                                              double blur_sigma = 1.0);

/// In-place variant used by the episode loop; same math as inpaint_lesion.
InpaintStats inpaint_lesion_inplace(Volume3D& image, LabelMask& full_mask,
                                    const LabelMask& lesion_mask, int radius_px = 5,
                                    double blur_sigma = 1.0);

}  // namespace lesionforge::inpaint
