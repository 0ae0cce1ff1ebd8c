#include "lesionforge/inpaint.hpp"

#include <cmath>
#include <queue>
#include <vector>

#include "lesionforge/errors.hpp"

namespace lesionforge::inpaint {

namespace {

constexpr double kFarTime = 1e6;
constexpr double kDirEps = 1e-6;
constexpr double kNormalEps = 1e-12;

enum class PixelState : uint8_t { Known, Band, Inside };

struct Front {
  int nx = 0, ny = 0;
  std::vector<PixelState> state;
  std::vector<double> t;

  int idx(int x, int y) const { return x + nx * y; }
  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < nx && y < ny; }
  bool known(int x, int y) const {
    return in_bounds(x, y) && state[static_cast<size_t>(idx(x, y))] == PixelState::Known;
  }
  /// Pixels with a meaningful (non-far) arrival time.
  bool has_time(int x, int y) const {
    return in_bounds(x, y) && state[static_cast<size_t>(idx(x, y))] != PixelState::Inside;
  }
};

struct HeapEntry {
  double t;
  int x, y;
};

struct HeapLater {
  bool operator()(const HeapEntry& a, const HeapEntry& b) const {
    if (a.t != b.t) return a.t > b.t;
    if (a.y != b.y) return a.y > b.y;
    return a.x > b.x;
  }
};

/// First-order upwind quadratic solve on one quadrant pair; only KNOWN
/// pixels participate.
double solve_quadrant(const Front& f, int x1, int y1, int x2, int y2) {
  const bool k1 = f.known(x1, y1);
  const bool k2 = f.known(x2, y2);
  if (k1 && k2) {
    const double t1 = f.t[static_cast<size_t>(f.idx(x1, y1))];
    const double t2 = f.t[static_cast<size_t>(f.idx(x2, y2))];
    const double disc = 2.0 - (t1 - t2) * (t1 - t2);
    if (disc >= 0.0) {
      const double r = std::sqrt(disc);
      double s = (t1 + t2 - r) * 0.5;
      if (s >= t1 && s >= t2) return s;
      s += r;
      if (s >= t1 && s >= t2) return s;
    }
    return kFarTime;
  }
  if (k1) return 1.0 + f.t[static_cast<size_t>(f.idx(x1, y1))];
  if (k2) return 1.0 + f.t[static_cast<size_t>(f.idx(x2, y2))];
  return kFarTime;
}

double eikonal_update(const Front& f, int x, int y) {
  const double a = solve_quadrant(f, x - 1, y, x, y - 1);
  const double b = solve_quadrant(f, x + 1, y, x, y - 1);
  const double c = solve_quadrant(f, x - 1, y, x, y + 1);
  const double d = solve_quadrant(f, x + 1, y, x, y + 1);
  return std::min(std::min(a, b), std::min(c, d));
}

/// One-sided/central difference of a field over pixels accepted by `valid`.
template <typename FieldAt, typename ValidAt>
double difference_1d(int lo, int hi, int at, FieldAt field, ValidAt valid) {
  const bool vlo = valid(lo);
  const bool vhi = valid(hi);
  if (vlo && vhi) return (field(hi) - field(lo)) * 0.5;
  if (vhi) return field(hi) - field(at);
  if (vlo) return field(at) - field(lo);
  return 0.0;
}

void inpaint_pixel(const Front& f, Slice2D& img, int x, int y, int radius) {
  const double tp = f.t[static_cast<size_t>(f.idx(x, y))];

  // Front normal: gradient of T at p over pixels with meaningful times.
  const double ngx = difference_1d(
      x - 1, x + 1, x, [&](int q) { return f.t[static_cast<size_t>(f.idx(q, y))]; },
      [&](int q) { return f.has_time(q, y); });
  const double ngy = difference_1d(
      y - 1, y + 1, y, [&](int q) { return f.t[static_cast<size_t>(f.idx(x, q))]; },
      [&](int q) { return f.has_time(x, q); });
  const double nlen = std::sqrt(ngx * ngx + ngy * ngy);
  const bool degenerate_normal = nlen < kNormalEps;

  double num = 0.0, den = 0.0;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dx == 0 && dy == 0) continue;
      const int qx = x + dx, qy = y + dy;
      if (!f.known(qx, qy)) continue;
      const int dist2 = dx * dx + dy * dy;
      if (dist2 > radius * radius) continue;

      // r = p - q
      const double rx = static_cast<double>(-dx);
      const double ry = static_cast<double>(-dy);
      const double rlen = std::sqrt(static_cast<double>(dist2));

      double dir = 1.0;
      if (!degenerate_normal)
        dir = std::max((ngx / nlen * rx + ngy / nlen * ry) / rlen, kDirEps);
      const double dst = 1.0 / static_cast<double>(dist2);
      const double tq = f.t[static_cast<size_t>(f.idx(qx, qy))];
      const double lev = 1.0 / (1.0 + std::abs(tq - tp));
      const double w = dir * dst * lev;

      const double gx = difference_1d(
          qx - 1, qx + 1, qx, [&](int q) { return img(q, qy); },
          [&](int q) { return f.known(q, qy); });
      const double gy = difference_1d(
          qy - 1, qy + 1, qy, [&](int q) { return img(qx, q); },
          [&](int q) { return f.known(qx, q); });

      num += w * (img(qx, qy) + gx * rx + gy * ry);
      den += w;
    }

  // A just-banded pixel always has a KNOWN 4-neighbor within the ball.
  img(x, y) = num / den;
}

}  // namespace

Slice2D inpaint_slice(const Slice2D& slice, const SliceMask2D& mask2d, int radius_px) {
  if (radius_px < 1) throw ContractError("inpaint_slice: radius must be >= 1");
  if (slice.rows() != mask2d.rows() || slice.cols() != mask2d.cols())
    throw ShapeError("inpaint_slice: slice/mask dims differ");
  const int nx = static_cast<int>(slice.rows());
  const int ny = static_cast<int>(slice.cols());
  const Eigen::Index masked = (mask2d != 0).count();
  if (masked == 0) throw ContractError("inpaint_slice: mask is empty on this slice");
  if (masked == static_cast<Eigen::Index>(nx) * ny)
    throw SeedError("inpaint_slice: mask covers the entire slice, no boundary seed", -1);

  Front f;
  f.nx = nx;
  f.ny = ny;
  f.state.assign(static_cast<size_t>(nx) * ny, PixelState::Known);
  f.t.assign(static_cast<size_t>(nx) * ny, 0.0);

  for (int y = 0; y < ny; ++y)
    for (int x = 0; x < nx; ++x)
      if (mask2d(x, y) != 0) {
        f.state[static_cast<size_t>(f.idx(x, y))] = PixelState::Inside;
        f.t[static_cast<size_t>(f.idx(x, y))] = kFarTime;
      }

  std::priority_queue<HeapEntry, std::vector<HeapEntry>, HeapLater> heap;
  const auto is_inside = [&](int x, int y) {
    return f.in_bounds(x, y) && f.state[static_cast<size_t>(f.idx(x, y))] == PixelState::Inside;
  };
  for (int y = 0; y < ny; ++y)
    for (int x = 0; x < nx; ++x) {
      if (mask2d(x, y) != 0) continue;
      if (is_inside(x - 1, y) || is_inside(x + 1, y) || is_inside(x, y - 1) || is_inside(x, y + 1)) {
        f.state[static_cast<size_t>(f.idx(x, y))] = PixelState::Band;
        heap.push({0.0, x, y});
      }
    }

  Slice2D out = slice;
  double last_accepted = 0.0;
  while (!heap.empty()) {
    const HeapEntry e = heap.top();
    heap.pop();
    const size_t pi = static_cast<size_t>(f.idx(e.x, e.y));
    if (f.state[pi] == PixelState::Known) continue;
    if (e.t != f.t[pi]) continue;  // stale priority

    if (e.t < last_accepted)
      throw ContractError("inpaint_slice: arrival times decreased in pop order");
    last_accepted = e.t;
    f.state[pi] = PixelState::Known;

    static constexpr int kNbr[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
    for (const auto& n : kNbr) {
      const int qx = e.x + n[0], qy = e.y + n[1];
      if (!f.in_bounds(qx, qy)) continue;
      const size_t qi = static_cast<size_t>(f.idx(qx, qy));
      if (f.state[qi] == PixelState::Known) continue;

      const double cand = eikonal_update(f, qx, qy);
      const bool improved = cand < f.t[qi];
      if (improved) f.t[qi] = cand;
      if (f.state[qi] == PixelState::Inside) {
        inpaint_pixel(f, out, qx, qy, radius_px);
        f.state[qi] = PixelState::Band;
        heap.push({f.t[qi], qx, qy});
      } else if (improved) {
        heap.push({f.t[qi], qx, qy});
      }
    }
  }

  return out;
}

InpaintStats inpaint_lesion_inplace(Volume3D& image, LabelMask& full_mask,
                                    const LabelMask& lesion_mask, int radius_px,
                                    double blur_sigma) {
  require_same_dims(image, full_mask, "inpaint_lesion");
  require_same_dims(image, lesion_mask, "inpaint_lesion");
  if (((lesion_mask.data() != 0) && (full_mask.data() == 0)).any())
    throw ContractError("inpaint_lesion: lesion mask is not a subset of the full mask");
  const Eigen::Index removed = count_nonzero(lesion_mask);
  if (removed == 0) throw ContractError("inpaint_lesion: lesion mask is empty");
  if (blur_sigma < 0.0 || !std::isfinite(blur_sigma))
    throw ContractError("inpaint_lesion: blur sigma must be finite and >= 0");

  const Dims3 d = image.dims();
  InpaintStats stats;
  stats.removed_voxels = removed;

  Slice2D slice(d[0], d[1]);
  SliceMask2D mask2d(d[0], d[1]);
  for (int z = 0; z < d[2]; ++z) {
    bool any = false;
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x) {
        const int32_t m = lesion_mask(x, y, z);
        mask2d(x, y) = m;
        if (m != 0) any = true;
      }
    if (!any) continue;
    if ((mask2d != 0).count() == static_cast<Eigen::Index>(d[0]) * d[1])
      throw SeedError("inpaint_lesion: lesion covers entire axial slice " + std::to_string(z), z);

    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x) slice(x, y) = static_cast<double>(image(x, y, z));

    Slice2D filled;
    try {
      filled = inpaint_slice(slice, mask2d, radius_px);
    } catch (const SeedError& e) {
      throw SeedError(e.what() + std::string(" (axial slice ") + std::to_string(z) + ")", z);
    }
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x)
        if (mask2d(x, y) != 0) image(x, y, z) = static_cast<float>(filled(x, y));
    ++stats.slices_touched;
  }

  // Blend the slice-wise fill with its 3D blur across the lesion interface.
  if (blur_sigma > 0.0) {
    const LabelMask shell = dilate6(boundary_shell(lesion_mask));
    const Box3 shell_box = tight_bbox(shell);
    const int pad = detail::gaussian_kernel_radius(blur_sigma);
    const Box3 blur_box = shell_box.padded_clamped(pad, d);
    const Volume3D blurred = gaussian_blur_3d(crop(image, blur_box), blur_sigma);
    for (int z = shell_box.lo[2]; z <= shell_box.hi[2]; ++z)
      for (int y = shell_box.lo[1]; y <= shell_box.hi[1]; ++y)
        for (int x = shell_box.lo[0]; x <= shell_box.hi[0]; ++x)
          if (shell(x, y, z) != 0)
            image(x, y, z) = blurred(x - blur_box.lo[0], y - blur_box.lo[1], z - blur_box.lo[2]);
  }

  for (Eigen::Index i = 0; i < full_mask.size(); ++i)
    if (lesion_mask.data()[i] != 0) full_mask.data()[i] = 0;

  return stats;
}

std::pair<Volume3D, LabelMask> inpaint_lesion(const Volume3D& image, const LabelMask& lesion_mask,
                                              const LabelMask& full_mask, int radius_px,
                                              double blur_sigma) {
  Volume3D out_image = image;
  LabelMask out_mask = full_mask;
  inpaint_lesion_inplace(out_image, out_mask, lesion_mask, radius_px, blur_sigma);
  return {std::move(out_image), std::move(out_mask)};
}

}  // namespace lesionforge::inpaint
