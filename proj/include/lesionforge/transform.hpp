#pragma once

#include <array>
#include <cstdint>
#include <utility>

#include "json.hpp"

#include "lesionforge/grid.hpp"
#include "lesionforge/rng.hpp"

namespace lesionforge::transform {

/// Parameter ranges and activation probabilities for lesion-level
/// augmentation. Defaults are the engine's operating point; all of them can
/// be overridden from the pipeline configuration.
struct TransformRanges {
  double flip_prob = 0.5;           // per axis
  double rotate_prob = 0.5;         // per axis
  double rotate_min_deg = 1.0;
  double rotate_max_deg = 89.0;
  double scale_min = 0.5;           // per-axis dimension multiplier
  double scale_max = 1.8;
  double elastic_sigma_min = 3.0;   // control-point displacement std, voxels
  double elastic_sigma_max = 7.0;
  double brightness_min = 0.9;      // multiplicative intensity factor
  double brightness_max = 1.1;
  bool noise_enabled = true;        // additive N(0,1) in donor z-score units
};

/// One concrete draw. Fully determines the augmented patch: the elastic field
/// and the noise field are regenerated from the embedded seeds, so a params
/// value round-tripped through JSON replays bit-exactly.
/// Spatial order is fixed: flip, rotate (x then y then z), scale, elastic,
/// composed into a single resampling pass; brightness then noise afterwards.
struct TransformParams {
  std::array<bool, 3> flip{false, false, false};
  std::array<double, 3> rotate_deg{0.0, 0.0, 0.0};  // 0 = inactive; signed
  std::array<double, 3> scale{1.0, 1.0, 1.0};
  double elastic_sigma = 0.0;  // 0 disables deformation
  uint64_t elastic_seed = 0;
  double brightness = 1.0;
  bool noise_enabled = false;
  uint64_t noise_seed = 0;
};

nlohmann::json to_json(const TransformParams& params);
TransformParams params_from_json(const nlohmann::json& j);

/// Draw params uniformly from the ranges: each flip/rotation axis is active
/// with its own probability, active rotation angles get a random sign.
TransformParams draw_params(Rng& rng, const TransformRanges& ranges = {});

/// Resample the patch through the composed spatial map in one pass:
/// intensities trilinear (coordinates clamped to the patch box), mask nearest
/// neighbor. The output box is grown to contain the transformed support.
/// Throws DegenerateTransformError if the mask support vanishes.
std::pair<Volume3D, LabelMask> apply_spatial(const Volume3D& patch, const LabelMask& mask,
                                             const TransformParams& params);

/// Brightness and additive noise inside the mask only. Noise is N(0,1) in
/// z-score units of the donor image: raw added value = draw * source_fg_std.
Volume3D apply_intensity(const Volume3D& patch, const LabelMask& mask,
                         const TransformParams& params, double source_fg_mean,
                         double source_fg_std);

}  // namespace lesionforge::transform
