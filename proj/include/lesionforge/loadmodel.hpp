#pragma once

#include <string>
#include <vector>

#include "lesionforge/grid.hpp"
#include "lesionforge/io.hpp"
#include "lesionforge/rng.hpp"

namespace lesionforge::loadmodel {

/// Normalized spatial probability grid for lesion-center placement. The
/// cumulative sums are cached so inverse-CDF draws are O(log n).
struct LikelihoodMap {
  Grid3<double> probs;
  std::vector<double> cdf;  // inclusive running sum, x-fastest flat order

  void rebuild_cdf();
  /// Inverse-CDF draw of a flat voxel index. Zero-probability voxels are
  /// never returned.
  Eigen::Index draw_flat(Rng& rng) const;
};

struct MapMode {
  enum Kind { LesionSum, OrganLabel } kind = LesionSum;
  int32_t organ_id = 0;
};

/// Accumulate mask indicators over the manifest and normalize to sum 1.
/// LesionSum counts binarized lesion voxels; OrganLabel counts voxels whose
/// label equals `organ_id`.
LikelihoodMap build_likelihood_map(const io::DatasetManifest& manifest, const MapMode& mode);

/// Wrap an already-normalized probability grid (e.g. loaded from a file).
/// Renormalizes tiny storage drift; anything beyond `tolerance` is an error.
LikelihoodMap likelihood_map_from_grid(Grid3<double> probs, double tolerance = 1e-6);

/// Per-image lesion loads (mm^3), sorted ascending.
std::vector<double> fit_load_distribution(const io::DatasetManifest& manifest);

/// Linear interpolation between closest ranks on the sorted sample;
/// p in [0, 100].
double percentile_linear(const std::vector<double>& sorted, double p);

enum class LoadKind { Low, Medium, High, Uniform, Gaussian, Real };

LoadKind load_kind_from_string(const std::string& name);
const char* to_string(LoadKind kind);

/// Target-load sampler. The four uniform kinds draw from percentile windows
/// of the dataset loads (Low [P5,P25], Medium [P37.5,P62.5], High [P75,P95],
/// Uniform [P5,P95]); Gaussian matches the sample mean/std truncated at 0;
/// Real draws dataset loads directly.
struct LoadDistribution {
  LoadKind kind = LoadKind::Uniform;
  std::vector<double> dataset_loads;  // sorted ascending
  double lo = 0.0, hi = 0.0;          // percentile window (uniform kinds)
  double mean = 0.0, stddev = 0.0;    // gaussian
};

LoadDistribution make_load_distribution(LoadKind kind, std::vector<double> sorted_loads);

double sample_target_load(const LoadDistribution& dist, Rng& rng);

}  // namespace lesionforge::loadmodel
