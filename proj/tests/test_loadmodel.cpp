#include "doctest.h"

#include <fstream>

#include "lesionforge/errors.hpp"
#include "lesionforge/loadmodel.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"
#include "stat_checks.hpp"

using namespace lesionforge;
using namespace lesionforge::loadmodel;

namespace {
const Spacing3 kIso(1.0, 1.0, 1.0);

std::vector<double> iota_loads(int n) {
  std::vector<double> loads(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) loads[static_cast<size_t>(i)] = static_cast<double>(i + 1);
  return loads;
}
}  // namespace

TEST_CASE("percentile_linear: pinned examples") {
  CHECK(percentile_linear({10, 20, 30, 40, 50}, 25.0) == doctest::Approx(20.0));
  CHECK(percentile_linear({42.0}, 5.0) == 42.0);
  CHECK(percentile_linear({42.0}, 95.0) == 42.0);

  const auto loads = iota_loads(100);
  CHECK(percentile_linear(loads, 5.0) == doctest::Approx(5.95));
  CHECK(percentile_linear(loads, 25.0) == doctest::Approx(25.75));

  for (double p : {0.0, 5.0, 37.5, 50.0, 62.5, 75.0, 95.0, 100.0})
    CHECK(percentile_linear(loads, p) == doctest::Approx(oracle::percentile(loads, p)));
}

TEST_CASE("build_likelihood_map: pinned examples and errors") {
  fixtures::TempDir tmp("lm_map");
  const Dims3 dims(5, 5, 5);

  LabelMask m1(dims, kIso);
  m1(1, 1, 1) = 1;
  LabelMask m2(dims, kIso);
  m2(3, 3, 3) = 1;
  io::write_volume(fixtures::textured_volume(dims, kIso, 1), tmp.file("i1.nii.gz"));
  io::write_volume(fixtures::textured_volume(dims, kIso, 2), tmp.file("i2.nii.gz"));
  io::write_mask(m1, tmp.file("m1.nii.gz"));
  io::write_mask(m2, tmp.file("m2.nii.gz"));
  {
    std::ofstream f(tmp.file("one.jsonl"));
    f << R"({"image":"i1.nii.gz","mask":"m1.nii.gz","subject":"a"})" << "\n";
  }
  {
    std::ofstream f(tmp.file("two.jsonl"));
    f << R"({"image":"i1.nii.gz","mask":"m1.nii.gz","subject":"a"})" << "\n";
    f << R"({"image":"i2.nii.gz","mask":"m2.nii.gz","subject":"b"})" << "\n";
  }

  const auto one = io::load_manifest(tmp.file("one.jsonl"));
  const LikelihoodMap map1 = build_likelihood_map(one, {});
  CHECK(map1.probs(1, 1, 1) == doctest::Approx(1.0));
  CHECK(map1.probs.data().sum() == doctest::Approx(1.0).epsilon(1e-12));

  const auto two = io::load_manifest(tmp.file("two.jsonl"));
  const LikelihoodMap map2 = build_likelihood_map(two, {});
  CHECK(map2.probs(1, 1, 1) == doctest::Approx(0.5));
  CHECK(map2.probs(3, 3, 3) == doctest::Approx(0.5));

  // support containment: nonzero only where a training lesion occurred
  for (Eigen::Index i = 0; i < map2.probs.size(); ++i) {
    const bool in_union = m1.data()[i] != 0 || m2.data()[i] != 0;
    CHECK((map2.probs.data()[i] != 0.0) == in_union);
  }

  MapMode organ;
  organ.kind = MapMode::OrganLabel;
  organ.organ_id = 9;  // absent everywhere
  CHECK_THROWS_AS((void)build_likelihood_map(two, organ), DataError);
}

TEST_CASE("build_likelihood_map: sums to one within 1e-9 on random data") {
  fixtures::TempDir tmp("lm_norm");
  const Dims3 dims(16, 16, 16);
  std::ofstream f(tmp.file("m.jsonl"));
  for (int s = 0; s < 5; ++s) {
    const auto img = fixtures::textured_volume(dims, kIso, 100 + s);
    const auto msk = fixtures::random_mask(dims, kIso, 200 + s, 0.2);
    io::write_volume(img, tmp.file("i" + std::to_string(s) + ".nii.gz"));
    io::write_mask(msk, tmp.file("k" + std::to_string(s) + ".nii.gz"));
    f << R"({"image":"i)" << s << R"(.nii.gz","mask":"k)" << s << R"(.nii.gz","subject":"s)" << s
      << R"("})" << "\n";
  }
  f.close();
  const auto manifest = io::load_manifest(tmp.file("m.jsonl"));
  const LikelihoodMap map = build_likelihood_map(manifest, {});
  CHECK(std::abs(map.probs.data().sum() - 1.0) <= 1e-9);
  CHECK((map.probs.data() >= 0.0).all());
}

TEST_CASE("fit_load_distribution: sorted per-image loads") {
  fixtures::TempDir tmp("lm_fit");
  const Dims3 dims(6, 6, 6);
  const int voxels[3] = {20, 0, 10};
  std::ofstream f(tmp.file("m.jsonl"));
  for (int s = 0; s < 3; ++s) {
    LabelMask msk(dims, kIso);
    for (int i = 0; i < voxels[s]; ++i) msk.data()[i] = 1;
    io::write_volume(fixtures::textured_volume(dims, kIso, 10 + s), tmp.file("i" + std::to_string(s) + ".nii.gz"));
    io::write_mask(msk, tmp.file("k" + std::to_string(s) + ".nii.gz"));
    f << R"({"image":"i)" << s << R"(.nii.gz","mask":"k)" << s << R"(.nii.gz","subject":"s)" << s
      << R"("})" << "\n";
  }
  f.close();
  const auto loads = fit_load_distribution(io::load_manifest(tmp.file("m.jsonl")));
  REQUIRE(loads.size() == 3);
  CHECK(loads[0] == 0.0);
  CHECK(loads[1] == doctest::Approx(10.0));
  CHECK(loads[2] == doctest::Approx(20.0));
}

TEST_CASE("sample_target_load: real singleton and percentile supports") {
  Rng rng(1234);

  const LoadDistribution real = make_load_distribution(LoadKind::Real, {42.0});
  for (int i = 0; i < 100; ++i) CHECK(sample_target_load(real, rng) == 42.0);

  const auto loads = iota_loads(100);
  const LoadDistribution low = make_load_distribution(LoadKind::Low, loads);
  CHECK(low.lo == doctest::Approx(5.95));
  CHECK(low.hi == doctest::Approx(25.75));
  std::vector<double> draws;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double v = sample_target_load(low, rng);
    CHECK(v >= low.lo);
    CHECK(v <= low.hi);
    draws.push_back(v);
  }
  CHECK(statcheck::ks_statistic_uniform(draws, low.lo, low.hi) <
        statcheck::ks_critical_99(draws.size()));
}

TEST_CASE("sample_target_load: gaussian moments and truncation") {
  std::vector<double> loads;
  Rng gen(5);
  for (int i = 0; i < 200; ++i) loads.push_back(gen.uniform(500.0, 1500.0));
  std::sort(loads.begin(), loads.end());
  const LoadDistribution g = make_load_distribution(LoadKind::Gaussian, loads);

  Rng rng(77);
  double sum = 0.0, ss = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double v = sample_target_load(g, rng);
    CHECK(v >= 0.0);
    sum += v;
    ss += v * v;
  }
  const double mean = sum / n;
  const double stddev = std::sqrt(ss / n - mean * mean);
  CHECK(std::abs(mean - g.mean) <= 0.02 * g.mean);
  CHECK(std::abs(stddev - g.stddev) <= 0.02 * g.stddev);

  // heavy truncation still yields non-negative draws
  const LoadDistribution tight = make_load_distribution(LoadKind::Gaussian, {0.0, 1.0, 2.0, 40.0});
  for (int i = 0; i < 2000; ++i) CHECK(sample_target_load(tight, rng) >= 0.0);
}

TEST_CASE("load distributions: nesting of percentile supports") {
  const auto loads = iota_loads(200);
  const auto low = make_load_distribution(LoadKind::Low, loads);
  const auto medium = make_load_distribution(LoadKind::Medium, loads);
  const auto high = make_load_distribution(LoadKind::High, loads);
  const auto uniform = make_load_distribution(LoadKind::Uniform, loads);
  for (const auto* d : {&low, &medium, &high}) {
    CHECK(d->lo >= uniform.lo);
    CHECK(d->hi <= uniform.hi);
  }
  CHECK(low.hi <= medium.lo);  // ordered windows
  CHECK(medium.hi <= high.lo);

  // all kinds except gaussian stay within the dataset range
  Rng rng(31);
  for (const auto* d : {&low, &medium, &high, &uniform}) {
    for (int i = 0; i < 5000; ++i) {
      const double v = sample_target_load(*d, rng);
      CHECK(v >= loads.front());
      CHECK(v <= loads.back());
    }
  }
  const auto real = make_load_distribution(LoadKind::Real, loads);
  for (int i = 0; i < 5000; ++i) {
    const double v = sample_target_load(real, rng);
    CHECK(v >= loads.front());
    CHECK(v <= loads.back());
  }
}

TEST_CASE("likelihood map draws: single nonzero voxel and zero-map error") {
  Grid3<double> probs(Dims3(4, 4, 4), kIso);
  probs(2, 1, 3) = 1.0;
  const LikelihoodMap map = likelihood_map_from_grid(probs);
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    const auto flat = map.draw_flat(rng);
    CHECK((map.probs.coord(flat) == Coord3(2, 1, 3)).all());
  }

  Grid3<double> zeros(Dims3(4, 4, 4), kIso);
  CHECK_THROWS_AS((void)likelihood_map_from_grid(zeros), DataError);

  // a zero map smuggled past construction still cannot be drawn from
  LikelihoodMap raw;
  raw.probs = zeros;
  raw.rebuild_cdf();
  CHECK_THROWS_AS((void)raw.draw_flat(rng), DataError);
}

TEST_CASE("load kind parsing") {
  CHECK(load_kind_from_string("low") == LoadKind::Low);
  CHECK(load_kind_from_string("real") == LoadKind::Real);
  CHECK_THROWS_AS((void)load_kind_from_string("bogus"), ConfigError);
}
