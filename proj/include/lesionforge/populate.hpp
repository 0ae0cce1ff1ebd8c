#pragma once

#include <string>

#include "lesionforge/grid.hpp"
#include "lesionforge/loadmodel.hpp"
#include "lesionforge/rng.hpp"

namespace lesionforge::populate {

struct Placement {
  Coord3 center{0, 0, 0};
  bool clipped = false;
  std::string host_subject;
};

/// Host-grid coordinate of patch voxel (0,0,0) when the patch-mask centroid
/// is aligned to `center`.
Coord3 placement_origin(const LabelMask& patch_mask, const Coord3& center);

struct PlaceResult {
  Volume3D image;
  LabelMask mask;
  LabelMask placed_mask;  // cropped support of the placed patch, host grid
};

struct PlaceStats {
  long long placed_voxels = 0;  // support voxels that landed in the grid
  long long added_voxels = 0;   // of those, voxels not already lesion
  Box3 placed_box;
};

/// Blend an augmented lesion patch into the host at `center`: the patch-mask
/// centroid is aligned to `center`, the support is cropped to the grid, the
/// image is mixed with soft weights (0.66 shell / 1 interior) and the mask is
/// unioned. Voxels outside the placed support are untouched.
/// Throws PlacementError when the cropped support is empty.
PlaceResult place_lesion(const Volume3D& host_image, const LabelMask& host_mask,
                         const Volume3D& patch, const LabelMask& patch_mask,
                         const Coord3& center);

/// In-place variant used by the episode loop; same math as place_lesion.
PlaceStats place_lesion_inplace(Volume3D& host_image, LabelMask& host_mask, const Volume3D& patch,
                                const LabelMask& patch_mask, const Coord3& center);

/// Draw a placement center by inverse-CDF over the likelihood map. Draws
/// whose cropped support would lose more than half of the patch voxels are
/// rejected and retried; after `max_tries` the last draw is accepted with
/// clipped=true.
Placement sample_placement(const loadmodel::LikelihoodMap& map, const LabelMask& patch_mask,
                           Rng& rng, int max_tries = 25);

}  // namespace lesionforge::populate
