#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lesionforge/grid.hpp"
#include "lesionforge/inpaint.hpp"
#include "lesionforge/io.hpp"
#include "lesionforge/lesions.hpp"
#include "lesionforge/loadmodel.hpp"
#include "lesionforge/populate.hpp"
#include "lesionforge/rng.hpp"
#include "lesionforge/transform.hpp"

namespace lesionforge::driver {

struct EpisodeOptions {
  transform::TransformRanges ranges;
  lesions::LesionSourcePolicy bank_policy = lesions::LesionSourcePolicy::CrossImage;
  int inpaint_radius = 5;
  double blur_sigma = 1.0;
  // termination guards
  int max_populate_iters = 500;
  int max_small_gap_strikes = 50;  // bank's smallest lesion exceeds the remaining gap
  int max_transform_redraws = 10;
  int max_placement_tries = 25;
};

struct EpisodeResult {
  Volume3D image;
  LabelMask mask;  // binary {0,1}
  io::ProvenanceRecord record;
};

/// One augmentation episode: sample the target load, then iterate only the
/// populating branch (target above current load) or only the inpainting
/// branch (target below) until the load crosses the target or a guard fires.
/// Every applied operation is appended to the provenance record.
EpisodeResult augment_one(const Volume3D& host_image, const LabelMask& host_mask,
                          const std::string& subject, const lesions::LesionBank& bank,
                          const loadmodel::LikelihoodMap& map,
                          const loadmodel::LoadDistribution& dist, Rng& rng,
                          const EpisodeOptions& opts = {});

/// Populate-only episode toward a fixed target load (no-op when the host is
/// already at or above it).
EpisodeResult populate_to_target(const Volume3D& host_image, const LabelMask& host_mask,
                                 const std::string& subject, const lesions::LesionBank& bank,
                                 const loadmodel::LikelihoodMap& map, double v_target_mm3,
                                 Rng& rng, const EpisodeOptions& opts = {});

/// Inpaint-only episode toward a fixed target load (no-op when the host is
/// already at or below it).
EpisodeResult inpaint_to_target(const Volume3D& host_image, const LabelMask& host_mask,
                                const std::string& subject, double v_target_mm3, Rng& rng,
                                const EpisodeOptions& opts = {});

/// Remove exactly one lesion, addressed by its component ordinal in the
/// deterministic decomposition order.
EpisodeResult inpaint_single(const Volume3D& host_image, const LabelMask& host_mask,
                             const std::string& subject, int lesion_ordinal,
                             const EpisodeOptions& opts = {});

struct AugmentationConfig {
  std::string manifest_path;
  int32_t lesion_class_id = 1;
  int count = 1;  // number of augmented pairs to emit
  loadmodel::LoadKind dist_kind = loadmodel::LoadKind::Uniform;
  lesions::LesionSourcePolicy bank_policy = lesions::LesionSourcePolicy::CrossImage;
  int min_lesion_voxels = 1;
  int inpaint_radius = 5;
  double blur_sigma = 1.0;
  uint64_t seed = 0;
  std::string out_dir;
  int jobs = 1;
  bool skip_failures = false;
  transform::TransformRanges ranges;
  std::string map_path;           // optional precomputed likelihood map file
  loadmodel::MapMode map_mode;    // used when map_path is empty
  bool cache_map = true;          // cache the built map under out_dir, keyed by manifest hash
};

/// Batch entry point. Hosts are drawn uniformly with replacement; output t
/// uses the RNG stream derived from (seed, t), so results are byte-identical
/// for any job count. Returns the image paths of the emitted outputs.
std::vector<std::string> augment_dataset(const AugmentationConfig& config);

/// Re-execute a provenance record against the original sources; the result
/// is bit-identical to the recorded output.
std::pair<Volume3D, LabelMask> replay(const io::ProvenanceRecord& record,
                                      const io::DatasetManifest& manifest,
                                      const lesions::LesionBank& bank);

/// Convenience overload: rebuilds the bank from the manifest using the
/// parameters stored in the record.
std::pair<Volume3D, LabelMask> replay(const io::ProvenanceRecord& record,
                                      const io::DatasetManifest& manifest);

}  // namespace lesionforge::driver
