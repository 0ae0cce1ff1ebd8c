#include "doctest.h"

#include <cmath>

#include "lesionforge/errors.hpp"
#include "lesionforge/grid.hpp"
#include "lesionforge/rng.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace lesionforge;

namespace {

const Spacing3 kIso(1.0, 1.0, 1.0);

Volume3D constant_volume(const Dims3& dims, float value) {
  Volume3D v(dims, kIso);
  v.data().setConstant(value);
  return v;
}

}  // namespace

TEST_CASE("elementwise_mix: all-zero weights is a bitwise identity") {
  const Dims3 dims(4, 3, 2);
  const Volume3D base = fixtures::textured_volume(dims, kIso, 11);
  const Volume3D overlay = fixtures::textured_volume(dims, kIso, 12);
  const SoftMask weights(dims, kIso, 0.0f);
  const Volume3D out = elementwise_mix(base, overlay, weights);
  for (Eigen::Index i = 0; i < out.size(); ++i)
    CHECK(out.data()[i] == base.data()[i]);
}

TEST_CASE("elementwise_mix: full and partial replacement") {
  const Dims3 dims(1, 1, 1);
  Volume3D base = constant_volume(dims, 0.0f);
  Volume3D overlay = constant_volume(dims, 5.0f);
  SoftMask w(dims, kIso, 1.0f);
  CHECK(elementwise_mix(base, overlay, w)(0, 0, 0) == doctest::Approx(5.0).epsilon(1e-9));

  base(0, 0, 0) = 10.0f;
  overlay(0, 0, 0) = 20.0f;
  w(0, 0, 0) = 0.66f;
  CHECK(elementwise_mix(base, overlay, w)(0, 0, 0) == doctest::Approx(16.6).epsilon(1e-6));
}

TEST_CASE("elementwise_mix: output bounded by operands voxelwise") {
  const Dims3 dims(6, 5, 4);
  const Volume3D base = fixtures::textured_volume(dims, kIso, 21);
  const Volume3D overlay = fixtures::textured_volume(dims, kIso, 22);
  SoftMask w(dims, kIso);
  Rng rng(23);
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const int pick = static_cast<int>(rng.uniform_index(3));
    w.data()[i] = pick == 0 ? 0.0f : (pick == 1 ? kBoundarySoftWeight : 1.0f);
  }
  const Volume3D out = elementwise_mix(base, overlay, w);
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const float lo = std::min(base.data()[i], overlay.data()[i]);
    const float hi = std::max(base.data()[i], overlay.data()[i]);
    CHECK(out.data()[i] >= lo - 1e-4f);
    CHECK(out.data()[i] <= hi + 1e-4f);
  }
}

TEST_CASE("elementwise_mix: dimension mismatch is a shape error") {
  const Volume3D a(Dims3(2, 2, 2), kIso);
  const Volume3D b(Dims3(2, 2, 3), kIso);
  const SoftMask w(Dims3(2, 2, 2), kIso);
  CHECK_THROWS_AS((void)elementwise_mix(a, b, w), ShapeError);
}

TEST_CASE("mask_union: trivial and overlap cases") {
  const Dims3 dims(3, 3, 3);
  LabelMask base(dims, kIso);
  LabelMask placed(dims, kIso);

  CHECK(count_nonzero(mask_union(base, placed)) == 0);

  placed(1, 1, 1) = 1;
  placed(0, 0, 0) = 1;
  CHECK(count_nonzero(mask_union(base, placed)) == 2);

  base(1, 1, 1) = 1;  // overlap is counted once
  CHECK(count_nonzero(mask_union(base, placed)) == 2);
}

TEST_CASE("mask algebra: union/subtract properties on random masks") {
  const Dims3 dims(8, 8, 8);
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const LabelMask a = fixtures::random_mask(dims, kIso, 100 + seed);
    const LabelMask b = fixtures::random_mask(dims, kIso, 200 + seed);
    const LabelMask c = fixtures::random_mask(dims, kIso, 300 + seed);

    const LabelMask ab = mask_union(a, b);
    const LabelMask ba = mask_union(b, a);
    CHECK((ab.data() == ba.data()).all());
    CHECK((mask_union(ab, c).data() == mask_union(a, mask_union(b, c)).data()).all());
    CHECK((mask_union(a, a).data() == binarize(a).data()).all());

    // disjoint part of b relative to a: union then subtract restores a
    LabelMask b_only(dims, kIso);
    b_only.data() = ((b.data() != 0) && (a.data() == 0)).cast<int32_t>();
    const LabelMask u = mask_union(a, b_only);
    CHECK((mask_subtract(u, b_only).data() == binarize(a).data()).all());
  }
}

TEST_CASE("mask_subtract: trivial cases and subset contract") {
  const Dims3 dims(4, 4, 4);
  LabelMask base(dims, kIso);
  for (int i = 0; i < 10; ++i) base.data()[i] = 1;
  LabelMask removed(dims, kIso);

  CHECK((mask_subtract(base, base).data() == 0).all());
  CHECK((mask_subtract(base, removed).data() == base.data()).all());

  for (int i = 0; i < 4; ++i) removed.data()[i] = 1;
  CHECK(count_nonzero(mask_subtract(base, removed)) == 6);

  removed.data()[20] = 1;  // voxel not in base
  CHECK_THROWS_AS((void)mask_subtract(base, removed), ContractError);
}

TEST_CASE("boundary_shell: single voxel, cube, empty") {
  const Dims3 dims(5, 5, 5);
  LabelMask single(dims, kIso);
  single(2, 2, 2) = 1;
  CHECK(boundary_shell(single)(2, 2, 2) == 1);
  CHECK(count_nonzero(boundary_shell(single)) == 1);

  LabelMask cube(dims, kIso);
  for (int z = 1; z <= 3; ++z)
    for (int y = 1; y <= 3; ++y)
      for (int x = 1; x <= 3; ++x) cube(x, y, z) = 1;
  const LabelMask shell = boundary_shell(cube);
  CHECK(count_nonzero(shell) == 26);
  CHECK(shell(2, 2, 2) == 0);

  const LabelMask empty(dims, kIso);
  CHECK(count_nonzero(boundary_shell(empty)) == 0);
}

TEST_CASE("boundary_shell: matches 6-neighborhood enumeration oracle") {
  for (uint64_t seed = 0; seed < 50; ++seed) {
    const LabelMask mask = fixtures::random_mask(Dims3(7, 6, 5), kIso, 400 + seed, 0.4);
    const LabelMask engine = boundary_shell(mask);
    const LabelMask expect = oracle::boundary_6(mask);
    CHECK((engine.data() == expect.data()).all());
  }
}

TEST_CASE("soft_mask_from: weights are exactly {0, 0.66, 1}") {
  const Dims3 dims(5, 5, 5);
  LabelMask single(dims, kIso);
  single(2, 2, 2) = 1;
  CHECK(soft_mask_from(single)(2, 2, 2) == kBoundarySoftWeight);

  LabelMask cube(dims, kIso);
  for (int z = 1; z <= 3; ++z)
    for (int y = 1; y <= 3; ++y)
      for (int x = 1; x <= 3; ++x) cube(x, y, z) = 1;
  const SoftMask soft = soft_mask_from(cube);
  CHECK(soft(2, 2, 2) == 1.0f);
  CHECK(soft(1, 1, 1) == kBoundarySoftWeight);
  CHECK(soft(0, 0, 0) == 0.0f);

  const LabelMask empty(dims, kIso);
  CHECK((soft_mask_from(empty).data() == 0.0f).all());

  for (uint64_t seed = 0; seed < 10; ++seed) {
    const LabelMask mask = fixtures::random_mask(dims, kIso, 500 + seed, 0.5);
    const SoftMask w = soft_mask_from(mask);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const float v = w.data()[i];
      CHECK((v == 0.0f || v == kBoundarySoftWeight || v == 1.0f));
      CHECK((v != 0.0f) == (mask.data()[i] != 0));  // support equality
    }
  }
}

TEST_CASE("gaussian_blur_3d: constant volume unchanged") {
  const Volume3D vol = constant_volume(Dims3(9, 8, 7), 42.5f);
  const Volume3D out = gaussian_blur_3d(vol, 1.3);
  for (Eigen::Index i = 0; i < out.size(); ++i)
    CHECK(out.data()[i] == doctest::Approx(42.5).epsilon(1e-6));
}

TEST_CASE("gaussian_blur_3d: impulse center equals g(0)^3 of the truncated kernel") {
  Grid3<double> vol(Dims3(9, 9, 9), kIso);
  vol(4, 4, 4) = 1.0;
  const Grid3<double> out = gaussian_blur_3d(vol, 1.0);
  const auto taps = oracle::gaussian_taps(1.0);
  const double g0 = taps[taps.size() / 2];
  CHECK(out(4, 4, 4) == doctest::Approx(g0 * g0 * g0).epsilon(1e-12));

  double sum = 0.0;
  for (Eigen::Index i = 0; i < out.size(); ++i) sum += out.data()[i];
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));  // interior-supported impulse
}

TEST_CASE("gaussian_blur_3d: semigroup property on smooth input") {
  Grid3<double> vol(Dims3(49, 49, 49), kIso);
  for (int z = 0; z < 49; ++z)
    for (int y = 0; y < 49; ++y)
      for (int x = 0; x < 49; ++x) {
        const double r2 = (x - 24.0) * (x - 24.0) + (y - 24.0) * (y - 24.0) + (z - 24.0) * (z - 24.0);
        vol(x, y, z) = 100.0 * std::exp(-r2 / 120.0);
      }
  const double sigma = 1.0;
  const Grid3<double> twice = gaussian_blur_3d(gaussian_blur_3d(vol, sigma), sigma);
  const Grid3<double> once = gaussian_blur_3d(vol, sigma * std::sqrt(2.0));
  double max_diff = 0.0, max_ref = 0.0;
  for (Eigen::Index i = 0; i < vol.size(); ++i) {
    max_diff = std::max(max_diff, std::abs(twice.data()[i] - once.data()[i]));
    max_ref = std::max(max_ref, std::abs(once.data()[i]));
  }
  CHECK(max_diff <= 1e-3 * max_ref);
}

TEST_CASE("gaussian_blur_3d: rejects non-positive sigma") {
  const Volume3D vol = constant_volume(Dims3(3, 3, 3), 1.0f);
  CHECK_THROWS_AS((void)gaussian_blur_3d(vol, 0.0), ContractError);
  CHECK_THROWS_AS((void)gaussian_blur_3d(vol, -1.0), ContractError);
}

TEST_CASE("Grid3: construction validates dims and spacing") {
  CHECK_THROWS_AS(Volume3D(Dims3(0, 2, 2), kIso), ShapeError);
  CHECK_THROWS_AS(Volume3D(Dims3(2, 2, 2), Spacing3(1.0, 0.0, 1.0)), ShapeError);
  CHECK_THROWS_AS(Volume3D(Dims3(2, 2, 2), Spacing3(1.0, -2.0, 1.0)), ShapeError);
}

TEST_CASE("crop: copies the inclusive box") {
  const Volume3D vol = fixtures::textured_volume(Dims3(6, 5, 4), kIso, 77);
  Box3 box;
  box.lo = Coord3(1, 2, 0);
  box.hi = Coord3(3, 4, 2);
  const Volume3D sub = crop(vol, box);
  CHECK((sub.dims() == Dims3(3, 3, 3)).all());
  for (int z = 0; z < 3; ++z)
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x)
        CHECK(sub(x, y, z) == vol(x + 1, y + 2, z));
}
