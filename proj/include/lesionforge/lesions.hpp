#pragma once

#include <map>
#include <string>
#include <vector>

#include "lesionforge/grid.hpp"
#include "lesionforge/io.hpp"
#include "lesionforge/rng.hpp"

namespace lesionforge::lesions {

/// One connected lesion component cropped out of its source image.
struct LesionInstance {
  std::string id;              // "<subject>#<ordinal>"
  std::string source_subject;
  Box3 bbox;                   // tight box in source-grid coordinates
  Volume3D patch_intensity;    // source intensities over bbox
  LabelMask patch_mask;        // this component's voxels only, binary
  double volume_mm3 = 0.0;
  // Foreground statistics of the source image, used to express additive
  // noise in z-score units of the donor.
  double source_fg_mean = 0.0;
  double source_fg_std = 0.0;
};

struct LesionBank {
  std::vector<LesionInstance> instances;
  std::map<std::string, std::vector<size_t>> per_subject;
  int32_t lesion_class_id = 1;
  int min_lesion_voxels = 1;

  bool empty() const { return instances.empty(); }
  /// Smallest instance volume, or +inf for an empty bank.
  double min_volume_mm3() const;
  const LesionInstance* find(const std::string& id) const;
};

enum class LesionSourcePolicy { CrossImage, SameImage };

struct SamplePolicy {
  LesionSourcePolicy kind = LesionSourcePolicy::CrossImage;
  std::string subject;  // required for SameImage
};

/// Maximal 26-connected components of the nonzero voxels. Components are
/// ordered by (min z, min y, min x) of their envelope and each component's
/// voxels are sorted by flat index, so the decomposition is deterministic.
std::vector<std::vector<Coord3>> connected_components_3d(const LabelMask& mask);

/// Total lesion volume: nonzero voxel count times voxel volume.
double measure_load(const LabelMask& mask);

/// Foreground mean/std of a volume; foreground is the nonzero voxels, or the
/// whole volume when nothing is nonzero. std is the sample standard deviation.
std::pair<double, double> foreground_stats(const Volume3D& image);

/// Crop every connected component of `mask` into a LesionInstance. Components
/// smaller than `min_voxels` are dropped.
std::vector<LesionInstance> extract_instances(const Volume3D& image, const LabelMask& mask,
                                              const std::string& subject, int min_voxels = 1);

/// Build the bank over the whole manifest (masks binarized by the manifest's
/// lesion class id).
LesionBank build_lesion_bank(const io::DatasetManifest& manifest, int min_voxels = 1);

/// Uniform draw with replacement over the instances eligible under `policy`.
const LesionInstance& sample_lesion(const LesionBank& bank, Rng& rng, const SamplePolicy& policy);

/// Serialize to a directory: index.json plus one native volume pair per
/// instance patch. `read_bank` restores it.
void write_bank(const LesionBank& bank, const std::string& dir);
LesionBank read_bank(const std::string& dir);

}  // namespace lesionforge::lesions
