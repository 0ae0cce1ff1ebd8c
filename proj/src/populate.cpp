#include "lesionforge/populate.hpp"

#include <cmath>

#include "lesionforge/errors.hpp"

namespace lesionforge::populate {

namespace {

struct Alignment {
  Coord3 origin;
  long long total = 0;
  long long retained = 0;
};

Alignment align(const LabelMask& patch_mask, const Coord3& center, const Dims3& host_dims) {
  Alignment a;
  a.origin = placement_origin(patch_mask, center);
  const Dims3 pd = patch_mask.dims();
  for (int z = 0; z < pd[2]; ++z)
    for (int y = 0; y < pd[1]; ++y)
      for (int x = 0; x < pd[0]; ++x) {
        if (patch_mask(x, y, z) == 0) continue;
        ++a.total;
        const int hx = a.origin[0] + x, hy = a.origin[1] + y, hz = a.origin[2] + z;
        if (hx >= 0 && hy >= 0 && hz >= 0 && hx < host_dims[0] && hy < host_dims[1] &&
            hz < host_dims[2])
          ++a.retained;
      }
  return a;
}

}  // namespace

Coord3 placement_origin(const LabelMask& patch_mask, const Coord3& center) {
  long long sx = 0, sy = 0, sz = 0, n = 0;
  const Dims3 pd = patch_mask.dims();
  for (int z = 0; z < pd[2]; ++z)
    for (int y = 0; y < pd[1]; ++y)
      for (int x = 0; x < pd[0]; ++x)
        if (patch_mask(x, y, z) != 0) {
          sx += x;
          sy += y;
          sz += z;
          ++n;
        }
  if (n == 0) throw ContractError("placement_origin: empty patch mask");
  const Coord3 centroid(
      static_cast<int>(std::llround(static_cast<double>(sx) / static_cast<double>(n))),
      static_cast<int>(std::llround(static_cast<double>(sy) / static_cast<double>(n))),
      static_cast<int>(std::llround(static_cast<double>(sz) / static_cast<double>(n))));
  return center - centroid;
}

PlaceStats place_lesion_inplace(Volume3D& host_image, LabelMask& host_mask, const Volume3D& patch,
                                const LabelMask& patch_mask, const Coord3& center) {
  require_same_dims(host_image, host_mask, "place_lesion");
  require_same_dims(patch, patch_mask, "place_lesion");
  if (!host_image.in_bounds(center)) throw ContractError("place_lesion: center outside host grid");
  if (count_nonzero(patch_mask) == 0) return {};  // nothing to place

  const Dims3 hd = host_image.dims();
  const Dims3 pd = patch_mask.dims();
  const Coord3 origin = placement_origin(patch_mask, center);

  // A placed voxel's blend weight depends on whether all six face neighbors
  // are also in the placed (cropped) support; anything off the grid or off
  // the patch support counts as outside, so grid borders weigh 0.66.
  const auto in_placed_support = [&](int px, int py, int pz) {
    if (px < 0 || py < 0 || pz < 0 || px >= pd[0] || py >= pd[1] || pz >= pd[2]) return false;
    if (patch_mask(px, py, pz) == 0) return false;
    const int hx = origin[0] + px, hy = origin[1] + py, hz = origin[2] + pz;
    return hx >= 0 && hy >= 0 && hz >= 0 && hx < hd[0] && hy < hd[1] && hz < hd[2];
  };

  PlaceStats stats;
  stats.placed_box.lo = hd;
  stats.placed_box.hi = Coord3(-1, -1, -1);
  for (int z = 0; z < pd[2]; ++z)
    for (int y = 0; y < pd[1]; ++y)
      for (int x = 0; x < pd[0]; ++x) {
        if (!in_placed_support(x, y, z)) continue;
        const int hx = origin[0] + x, hy = origin[1] + y, hz = origin[2] + z;
        const bool interior = in_placed_support(x - 1, y, z) && in_placed_support(x + 1, y, z) &&
                              in_placed_support(x, y - 1, z) && in_placed_support(x, y + 1, z) &&
                              in_placed_support(x, y, z - 1) && in_placed_support(x, y, z + 1);
        const float w = interior ? kInteriorSoftWeight : kBoundarySoftWeight;
        host_image(hx, hy, hz) = host_image(hx, hy, hz) * (1.0f - w) + patch(x, y, z) * w;
        ++stats.placed_voxels;
        if (host_mask(hx, hy, hz) == 0) {
          host_mask(hx, hy, hz) = 1;
          ++stats.added_voxels;
        }
        stats.placed_box.lo = stats.placed_box.lo.min(Coord3(hx, hy, hz));
        stats.placed_box.hi = stats.placed_box.hi.max(Coord3(hx, hy, hz));
      }

  if (stats.placed_voxels == 0)
    throw PlacementError("place_lesion: cropped patch support is empty, resample center");
  return stats;
}

PlaceResult place_lesion(const Volume3D& host_image, const LabelMask& host_mask,
                         const Volume3D& patch, const LabelMask& patch_mask,
                         const Coord3& center) {
  PlaceResult result;
  result.image = host_image;
  result.mask = host_mask;
  result.placed_mask = LabelMask(host_mask.dims(), host_mask.spacing());
  if (count_nonzero(patch_mask) == 0) return result;  // nothing to place

  const Coord3 origin = placement_origin(patch_mask, center);
  const Dims3 pd = patch_mask.dims();
  for (int z = 0; z < pd[2]; ++z)
    for (int y = 0; y < pd[1]; ++y)
      for (int x = 0; x < pd[0]; ++x) {
        if (patch_mask(x, y, z) == 0) continue;
        const Coord3 h = origin + Coord3(x, y, z);
        if (result.placed_mask.in_bounds(h)) result.placed_mask(h) = 1;
      }

  place_lesion_inplace(result.image, result.mask, patch, patch_mask, center);
  return result;
}

Placement sample_placement(const loadmodel::LikelihoodMap& map, const LabelMask& patch_mask,
                           Rng& rng, int max_tries) {
  if (max_tries < 1) throw ContractError("sample_placement: max_tries must be >= 1");
  if (count_nonzero(patch_mask) == 0) throw ContractError("sample_placement: empty patch mask");

  Placement placement;
  for (int attempt = 0; attempt < max_tries; ++attempt) {
    const Eigen::Index flat = map.draw_flat(rng);
    placement.center = map.probs.coord(flat);
    const Alignment a = align(patch_mask, placement.center, map.probs.dims());
    if (2 * a.retained >= a.total) {
      placement.clipped = a.retained < a.total;
      return placement;
    }
  }
  placement.clipped = true;  // retry budget spent, accept the last draw
  return placement;
}

}  // namespace lesionforge::populate
