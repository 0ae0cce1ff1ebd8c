#include "lesionforge/transform.hpp"

#include <Eigen/Dense>

#include <cmath>

#include "lesionforge/errors.hpp"

namespace lesionforge::transform {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

Eigen::Matrix3d rotation_matrix(const std::array<double, 3>& rotate_deg) {
  Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
  // x, then y, then z
  if (rotate_deg[0] != 0.0) {
    const double a = rotate_deg[0] * kPi / 180.0;
    Eigen::Matrix3d rx;
    rx << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
    r = rx * r;
  }
  if (rotate_deg[1] != 0.0) {
    const double a = rotate_deg[1] * kPi / 180.0;
    Eigen::Matrix3d ry;
    ry << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
    r = ry * r;
  }
  if (rotate_deg[2] != 0.0) {
    const double a = rotate_deg[2] * kPi / 180.0;
    Eigen::Matrix3d rz;
    rz << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
    r = rz * r;
  }
  return r;
}

/// Trilinearly interpolated control-point displacement field. Control points
/// form a 4x4x4 lattice spanning 1.25x the output box; displacements are iid
/// N(0, sigma) voxels per component, regenerated from the seed.
struct ElasticField {
  static constexpr int kGrid = 4;
  std::array<double, kGrid * kGrid * kGrid * 3> d{};
  Eigen::Vector3d origin{0, 0, 0};
  Eigen::Vector3d cell{1, 1, 1};
  bool active = false;
  double max_abs[3] = {0, 0, 0};

  static ElasticField make(const TransformParams& params, const Eigen::Vector3d& out_center,
                           const Eigen::Vector3d& out_half_extent) {
    ElasticField f;
    if (params.elastic_sigma <= 0.0) return f;
    f.active = true;
    Rng rng(params.elastic_seed);
    for (int i = 0; i < kGrid * kGrid * kGrid; ++i)
      for (int c = 0; c < 3; ++c) {
        const double v = rng.normal() * params.elastic_sigma;
        f.d[static_cast<size_t>(i * 3 + c)] = v;
        f.max_abs[c] = std::max(f.max_abs[c], std::abs(v));
      }
    const Eigen::Vector3d span = 1.25 * 2.0 * out_half_extent.cwiseMax(0.5);
    f.origin = out_center - span / 2.0;
    f.cell = span / static_cast<double>(kGrid - 1);
    return f;
  }

  Eigen::Vector3d at(const Eigen::Vector3d& p) const {
    if (!active) return Eigen::Vector3d::Zero();
    Eigen::Vector3d u = (p - origin).cwiseQuotient(cell);
    int i0[3];
    double fr[3];
    for (int c = 0; c < 3; ++c) {
      double v = std::min(std::max(u[c], 0.0), static_cast<double>(kGrid - 1));
      i0[c] = std::min(static_cast<int>(std::floor(v)), kGrid - 2);
      fr[c] = v - static_cast<double>(i0[c]);
    }
    Eigen::Vector3d out = Eigen::Vector3d::Zero();
    for (int dz = 0; dz <= 1; ++dz)
      for (int dy = 0; dy <= 1; ++dy)
        for (int dx = 0; dx <= 1; ++dx) {
          const double w = (dx ? fr[0] : 1.0 - fr[0]) * (dy ? fr[1] : 1.0 - fr[1]) *
                           (dz ? fr[2] : 1.0 - fr[2]);
          const int idx = (i0[0] + dx) + kGrid * ((i0[1] + dy) + kGrid * (i0[2] + dz));
          for (int c = 0; c < 3; ++c) out[c] += w * d[static_cast<size_t>(idx * 3 + c)];
        }
    return out;
  }
};

float sample_trilinear_clamped(const Volume3D& vol, const Eigen::Vector3d& p) {
  const Dims3 d = vol.dims();
  double c[3];
  for (int i = 0; i < 3; ++i) c[i] = std::min(std::max(p[i], 0.0), static_cast<double>(d[i] - 1));
  int i0[3];
  double fr[3];
  for (int i = 0; i < 3; ++i) {
    i0[i] = static_cast<int>(std::floor(c[i]));
    if (i0[i] >= d[i] - 1) i0[i] = d[i] - 1 > 0 ? d[i] - 2 : 0;
    if (i0[i] < 0) i0[i] = 0;
    fr[i] = c[i] - static_cast<double>(i0[i]);
    if (d[i] == 1) {
      i0[i] = 0;
      fr[i] = 0.0;
    }
  }
  double acc = 0.0;
  for (int dz = 0; dz <= 1; ++dz)
    for (int dy = 0; dy <= 1; ++dy)
      for (int dx = 0; dx <= 1; ++dx) {
        const double w = (dx ? fr[0] : 1.0 - fr[0]) * (dy ? fr[1] : 1.0 - fr[1]) *
                         (dz ? fr[2] : 1.0 - fr[2]);
        if (w == 0.0) continue;
        const int x = std::min(i0[0] + dx, d[0] - 1);
        const int y = std::min(i0[1] + dy, d[1] - 1);
        const int z = std::min(i0[2] + dz, d[2] - 1);
        acc += w * static_cast<double>(vol(x, y, z));
      }
  return static_cast<float>(acc);
}

}  // namespace

nlohmann::json to_json(const TransformParams& p) {
  nlohmann::json j;
  j["flip"] = {p.flip[0], p.flip[1], p.flip[2]};
  j["rotate_deg"] = {p.rotate_deg[0], p.rotate_deg[1], p.rotate_deg[2]};
  j["scale"] = {p.scale[0], p.scale[1], p.scale[2]};
  j["elastic_sigma"] = p.elastic_sigma;
  j["elastic_seed"] = p.elastic_seed;
  j["brightness"] = p.brightness;
  j["noise_enabled"] = p.noise_enabled;
  j["noise_seed"] = p.noise_seed;
  return j;
}

TransformParams params_from_json(const nlohmann::json& j) {
  TransformParams p;
  for (int i = 0; i < 3; ++i) {
    p.flip[static_cast<size_t>(i)] = j.at("flip")[static_cast<size_t>(i)].get<bool>();
    p.rotate_deg[static_cast<size_t>(i)] = j.at("rotate_deg")[static_cast<size_t>(i)].get<double>();
    p.scale[static_cast<size_t>(i)] = j.at("scale")[static_cast<size_t>(i)].get<double>();
  }
  p.elastic_sigma = j.at("elastic_sigma").get<double>();
  p.elastic_seed = j.at("elastic_seed").get<uint64_t>();
  p.brightness = j.at("brightness").get<double>();
  p.noise_enabled = j.at("noise_enabled").get<bool>();
  p.noise_seed = j.at("noise_seed").get<uint64_t>();
  return p;
}

TransformParams draw_params(Rng& rng, const TransformRanges& ranges) {
  TransformParams p;
  // Fixed draw order; every branch consumes a deterministic number of draws
  // only through the rng handle, so (seed, draw index) pins the params.
  for (int i = 0; i < 3; ++i) p.flip[static_cast<size_t>(i)] = rng.bernoulli(ranges.flip_prob);
  for (int i = 0; i < 3; ++i) {
    if (rng.bernoulli(ranges.rotate_prob)) {
      const double mag = rng.uniform(ranges.rotate_min_deg, ranges.rotate_max_deg);
      const bool negative = rng.bernoulli(0.5);
      p.rotate_deg[static_cast<size_t>(i)] = negative ? -mag : mag;
    }
  }
  for (int i = 0; i < 3; ++i)
    p.scale[static_cast<size_t>(i)] = rng.uniform(ranges.scale_min, ranges.scale_max);
  p.elastic_sigma = rng.uniform(ranges.elastic_sigma_min, ranges.elastic_sigma_max);
  p.elastic_seed = rng.next_u64();
  p.brightness = rng.uniform(ranges.brightness_min, ranges.brightness_max);
  p.noise_enabled = ranges.noise_enabled;
  p.noise_seed = rng.next_u64();
  return p;
}

std::pair<Volume3D, LabelMask> apply_spatial(const Volume3D& patch, const LabelMask& mask,
                                             const TransformParams& params) {
  require_same_dims(patch, mask, "apply_spatial");
  if (count_nonzero(mask) == 0) throw ContractError("apply_spatial: empty input patch mask");

  const Dims3 din = patch.dims();
  Eigen::Matrix3d flip = Eigen::Matrix3d::Identity();
  for (int i = 0; i < 3; ++i)
    if (params.flip[static_cast<size_t>(i)]) flip(i, i) = -1.0;
  Eigen::Matrix3d scale = Eigen::Matrix3d::Identity();
  for (int i = 0; i < 3; ++i) scale(i, i) = params.scale[static_cast<size_t>(i)];
  const Eigen::Matrix3d fwd = scale * rotation_matrix(params.rotate_deg) * flip;
  const Eigen::Matrix3d inv = fwd.inverse();

  const Eigen::Vector3d c_in(static_cast<double>(din[0] - 1) / 2.0,
                             static_cast<double>(din[1] - 1) / 2.0,
                             static_cast<double>(din[2] - 1) / 2.0);

  // Half extent of the transformed input box (voxel-center corners).
  Eigen::Vector3d half = Eigen::Vector3d::Zero();
  for (int corner = 0; corner < 8; ++corner) {
    const Eigen::Vector3d rel((corner & 1 ? din[0] - 1 : 0) - c_in[0],
                              (corner & 2 ? din[1] - 1 : 0) - c_in[1],
                              (corner & 4 ? din[2] - 1 : 0) - c_in[2]);
    half = half.cwiseMax((fwd * rel).cwiseAbs());
  }

  // The elastic field is drawn before sizing so the output box can absorb
  // the largest drawn displacement.
  ElasticField probe = ElasticField::make(params, Eigen::Vector3d::Zero(), half);
  Dims3 dout;
  for (int i = 0; i < 3; ++i) {
    const double pad = probe.active ? std::ceil(probe.max_abs[i]) : 0.0;
    dout[i] = static_cast<int>(std::ceil(2.0 * (half[i] + pad) + 1.0 - 1e-9));
    dout[i] = std::max(dout[i], 1);
  }
  const Eigen::Vector3d c_out(static_cast<double>(dout[0] - 1) / 2.0,
                              static_cast<double>(dout[1] - 1) / 2.0,
                              static_cast<double>(dout[2] - 1) / 2.0);
  const ElasticField field = ElasticField::make(
      params, c_out, Eigen::Vector3d(half[0] + (probe.active ? std::ceil(probe.max_abs[0]) : 0.0),
                                     half[1] + (probe.active ? std::ceil(probe.max_abs[1]) : 0.0),
                                     half[2] + (probe.active ? std::ceil(probe.max_abs[2]) : 0.0)));

  Volume3D out_patch(dout, patch.spacing());
  LabelMask out_mask(dout, mask.spacing());
  bool any = false;
  for (int z = 0; z < dout[2]; ++z)
    for (int y = 0; y < dout[1]; ++y)
      for (int x = 0; x < dout[0]; ++x) {
        Eigen::Vector3d p(x, y, z);
        if (field.active) p += field.at(p);
        const Eigen::Vector3d src = inv * (p - c_out) + c_in;
        // mask: nearest neighbor, then binarize
        const long long nx = std::llround(src[0]);
        const long long ny = std::llround(src[1]);
        const long long nz = std::llround(src[2]);
        const bool on = nx >= 0 && ny >= 0 && nz >= 0 && nx < din[0] && ny < din[1] &&
                        nz < din[2] &&
                        mask(static_cast<int>(nx), static_cast<int>(ny), static_cast<int>(nz)) != 0;
        if (on) {
          out_mask(x, y, z) = 1;
          any = true;
        }
        out_patch(x, y, z) = sample_trilinear_clamped(patch, src);
      }

  if (!any)
    throw DegenerateTransformError("apply_spatial: transformed mask is empty, redraw params");
  return {std::move(out_patch), std::move(out_mask)};
}

Volume3D apply_intensity(const Volume3D& patch, const LabelMask& mask,
                         const TransformParams& params, double /*source_fg_mean*/,
                         double source_fg_std) {
  require_same_dims(patch, mask, "apply_intensity");
  if (!(source_fg_std > 0.0) || !std::isfinite(source_fg_std))
    throw ContractError("apply_intensity: source foreground std must be positive");

  Volume3D out = patch;
  Rng noise(params.noise_seed);
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (mask.data()[i] == 0) continue;
    double v = static_cast<double>(out.data()[i]) * params.brightness;
    if (params.noise_enabled) v += noise.normal() * source_fg_std;
    out.data()[i] = static_cast<float>(v);
  }
  return out;
}

}  // namespace lesionforge::transform
