#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "lesionforge/grid.hpp"

namespace lesionforge::io {

// Two on-disk volume formats, selected by extension:
//   *.nii / *.nii.gz          NIfTI-1, gzip detected by magic bytes on read
//   *.raw / *.meta.json       native pair: JSON sidecar + little-endian blob
// Images are written as float32 in NIfTI and float32 raw natively; masks are
// written as unsigned integers in NIfTI (smallest width that fits the labels)
// and int32 raw natively. The native format round-trips bit-exactly.

Volume3D read_volume(const std::string& path);
LabelMask read_mask(const std::string& path);
void write_volume(const Volume3D& vol, const std::string& path);
void write_mask(const LabelMask& mask, const std::string& path);

/// Probability grids (likelihood maps) are stored as float64 NIfTI so the
/// normalization survives the round trip.
Grid3<double> read_map(const std::string& path);
void write_map(const Grid3<double>& map, const std::string& path);

/// Header-only geometry peek; avoids decoding voxel data.
std::pair<Dims3, Spacing3> probe_geometry(const std::string& path);

struct ManifestEntry {
  std::string image;
  std::string mask;
  std::string subject;
  std::string split;  // optional
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  int32_t lesion_class_id = 1;
  std::string modality_tag;
  std::string base_dir;  // relative entry paths resolve against this
};

/// Resolve an entry path against the manifest directory.
std::string resolve_path(const DatasetManifest& manifest, const std::string& path);

/// Load a line-delimited JSON manifest (fields: image, mask, subject,
/// optional split). Validates existence, image/mask geometry agreement and
/// subject uniqueness.
DatasetManifest load_manifest(const std::string& path, int32_t lesion_class_id = 1);

struct ProvenanceOp {
  std::string kind;  // "populate" | "inpaint"
  // populate
  std::string source_lesion_id;
  std::array<int, 3> placement_center{0, 0, 0};
  nlohmann::json transform_params;
  long long placed_voxels = 0;
  long long added_voxels = 0;
  // inpaint
  int lesion_ordinal = -1;  // component ordinal at op time, deterministic order
  int inpaint_radius = 0;
  double blur_sigma = 0.0;
  long long removed_voxels = 0;
  // both
  double v_after_mm3 = 0.0;
};

struct ProvenanceRecord {
  int schema = 1;
  std::string output_id;
  std::string source_subject;
  double v_initial_mm3 = 0.0;
  double v_target_mm3 = 0.0;
  double v_final_mm3 = 0.0;
  uint64_t rng_seed = 0;  // per-output derived stream seed
  // Enough of the run configuration to rebuild the lesion bank for replay.
  int32_t lesion_class_id = 1;
  int min_lesion_voxels = 1;
  std::vector<ProvenanceOp> operations;
};

void write_provenance(const ProvenanceRecord& record, const std::string& path);
ProvenanceRecord read_provenance(const std::string& path);

nlohmann::json to_json(const ProvenanceRecord& record);
ProvenanceRecord provenance_from_json(const nlohmann::json& j);

}  // namespace lesionforge::io
