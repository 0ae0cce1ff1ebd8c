#include "lesionforge/loadmodel.hpp"

#include <algorithm>
#include <cmath>

#include "lesionforge/errors.hpp"
#include "lesionforge/lesions.hpp"

namespace lesionforge::loadmodel {

void LikelihoodMap::rebuild_cdf() {
  cdf.resize(static_cast<size_t>(probs.size()));
  double run = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    run += probs.data()[i];
    cdf[static_cast<size_t>(i)] = run;
  }
}

Eigen::Index LikelihoodMap::draw_flat(Rng& rng) const {
  if (cdf.empty()) throw ContractError("LikelihoodMap: cdf not built");
  if (!(cdf.back() > 0.0)) throw DataError("LikelihoodMap: map is all zero");
  const double u = rng.uniform01() * cdf.back();
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  Eigen::Index idx = it == cdf.end() ? static_cast<Eigen::Index>(cdf.size()) - 1
                                     : static_cast<Eigen::Index>(it - cdf.begin());
  // Guard the degenerate tail: never land on a zero-probability voxel.
  while (idx > 0 && probs.data()[idx] == 0.0) --idx;
  return idx;
}

LikelihoodMap build_likelihood_map(const io::DatasetManifest& manifest, const MapMode& mode) {
  if (manifest.entries.empty()) throw DataError("build_likelihood_map: empty manifest");

  Grid3<double> acc;
  bool first = true;
  for (const auto& entry : manifest.entries) {
    const LabelMask labels = io::read_mask(io::resolve_path(manifest, entry.mask));
    if (first) {
      acc = Grid3<double>(labels.dims(), labels.spacing());
      first = false;
    } else if (!(acc.dims() == labels.dims()).all()) {
      throw DataError("build_likelihood_map: mask geometry mismatch at subject " + entry.subject);
    }
    const int32_t wanted = mode.kind == MapMode::LesionSum ? manifest.lesion_class_id : mode.organ_id;
    acc.data() += (labels.data() == wanted).cast<double>();
  }

  const double total = acc.data().sum();
  if (!(total > 0.0))
    throw DataError(mode.kind == MapMode::LesionSum
                        ? "build_likelihood_map: no lesion voxels in any mask"
                        : "build_likelihood_map: organ label absent from all masks");
  acc.data() /= total;

  LikelihoodMap map;
  map.probs = std::move(acc);
  map.rebuild_cdf();
  return map;
}

LikelihoodMap likelihood_map_from_grid(Grid3<double> probs, double tolerance) {
  if ((probs.data() < 0.0).any()) throw DataError("likelihood map has negative entries");
  const double total = probs.data().sum();
  if (!(std::abs(total - 1.0) <= tolerance))
    throw DataError("likelihood map does not sum to 1");
  probs.data() /= total;
  LikelihoodMap map;
  map.probs = std::move(probs);
  map.rebuild_cdf();
  return map;
}

std::vector<double> fit_load_distribution(const io::DatasetManifest& manifest) {
  if (manifest.entries.empty()) throw DataError("fit_load_distribution: empty manifest");
  std::vector<double> loads;
  loads.reserve(manifest.entries.size());
  for (const auto& entry : manifest.entries) {
    const LabelMask labels = io::read_mask(io::resolve_path(manifest, entry.mask));
    loads.push_back(lesions::measure_load(binarize(labels, manifest.lesion_class_id)));
  }
  std::sort(loads.begin(), loads.end());
  return loads;
}

double percentile_linear(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw ContractError("percentile of an empty sample");
  if (sorted.size() == 1) return sorted[0];
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p / 100.0;
  const auto i = static_cast<size_t>(std::floor(h));
  if (i + 1 >= sorted.size()) return sorted.back();
  const double frac = h - static_cast<double>(i);
  return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
}

LoadKind load_kind_from_string(const std::string& name) {
  if (name == "low") return LoadKind::Low;
  if (name == "medium") return LoadKind::Medium;
  if (name == "high") return LoadKind::High;
  if (name == "uniform") return LoadKind::Uniform;
  if (name == "gaussian") return LoadKind::Gaussian;
  if (name == "real") return LoadKind::Real;
  throw ConfigError("unknown load distribution: " + name);
}

const char* to_string(LoadKind kind) {
  switch (kind) {
    case LoadKind::Low: return "low";
    case LoadKind::Medium: return "medium";
    case LoadKind::High: return "high";
    case LoadKind::Uniform: return "uniform";
    case LoadKind::Gaussian: return "gaussian";
    case LoadKind::Real: return "real";
  }
  return "?";
}

LoadDistribution make_load_distribution(LoadKind kind, std::vector<double> sorted_loads) {
  if (sorted_loads.empty()) throw DataError("load distribution needs at least one image load");
  if (!std::is_sorted(sorted_loads.begin(), sorted_loads.end()))
    throw ContractError("make_load_distribution: loads must be sorted");
  LoadDistribution dist;
  dist.kind = kind;
  dist.dataset_loads = std::move(sorted_loads);
  const auto& loads = dist.dataset_loads;
  switch (kind) {
    case LoadKind::Low:
      dist.lo = percentile_linear(loads, 5.0);
      dist.hi = percentile_linear(loads, 25.0);
      break;
    case LoadKind::Medium:
      dist.lo = percentile_linear(loads, 37.5);
      dist.hi = percentile_linear(loads, 62.5);
      break;
    case LoadKind::High:
      dist.lo = percentile_linear(loads, 75.0);
      dist.hi = percentile_linear(loads, 95.0);
      break;
    case LoadKind::Uniform:
      dist.lo = percentile_linear(loads, 5.0);
      dist.hi = percentile_linear(loads, 95.0);
      break;
    case LoadKind::Gaussian: {
      double sum = 0.0;
      for (double v : loads) sum += v;
      dist.mean = sum / static_cast<double>(loads.size());
      double ss = 0.0;
      for (double v : loads) ss += (v - dist.mean) * (v - dist.mean);
      dist.stddev = loads.size() > 1 ? std::sqrt(ss / static_cast<double>(loads.size() - 1)) : 0.0;
      break;
    }
    case LoadKind::Real:
      break;
  }
  return dist;
}

double sample_target_load(const LoadDistribution& dist, Rng& rng) {
  switch (dist.kind) {
    case LoadKind::Low:
    case LoadKind::Medium:
    case LoadKind::High:
    case LoadKind::Uniform:
      return rng.uniform(dist.lo, dist.hi);
    case LoadKind::Gaussian:
      for (int i = 0; i < 100; ++i) {
        const double v = dist.mean + dist.stddev * rng.normal();
        if (v >= 0.0) return v;
      }
      return 0.0;  // clamp after the retry budget
    case LoadKind::Real:
      return dist.dataset_loads[rng.uniform_index(dist.dataset_loads.size())];
  }
  throw ContractError("sample_target_load: bad kind");
}

}  // namespace lesionforge::loadmodel
