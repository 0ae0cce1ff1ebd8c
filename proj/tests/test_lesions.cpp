#include "doctest.h"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "lesionforge/errors.hpp"
#include "lesionforge/lesions.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace lesionforge;
using lesions::connected_components_3d;
using lesions::extract_instances;
using lesions::measure_load;

namespace {
const Spacing3 kIso(1.0, 1.0, 1.0);
}

TEST_CASE("connected_components_3d: corner contact is one component") {
  LabelMask mask(Dims3(4, 4, 4), kIso);
  mask(0, 0, 0) = 1;
  mask(1, 1, 1) = 1;  // shares only a corner
  CHECK(connected_components_3d(mask).size() == 1);

  LabelMask gap(Dims3(5, 1, 1), kIso);
  gap(0, 0, 0) = 1;
  gap(2, 0, 0) = 1;  // one background voxel between
  CHECK(connected_components_3d(gap).size() == 2);

  const LabelMask empty(Dims3(3, 3, 3), kIso);
  CHECK(connected_components_3d(empty).empty());
}

TEST_CASE("connected_components_3d: agrees with BFS flood-fill oracle") {
  int checked = 0;
  for (uint64_t seed = 0; seed < 1000; ++seed) {
    const LabelMask mask = fixtures::random_mask(Dims3(16, 16, 16), kIso, 7000 + seed, 0.18);
    const auto components = connected_components_3d(mask);
    const auto labels = oracle::flood_fill_26(mask);

    // same number of components
    int oracle_count = 0;
    for (int l : labels) oracle_count = std::max(oracle_count, l);
    REQUIRE(static_cast<int>(components.size()) == oracle_count);

    // every engine component maps to exactly one oracle label and the voxel
    // counts agree
    std::map<int, size_t> oracle_sizes;
    for (int l : labels)
      if (l != 0) ++oracle_sizes[l];
    for (const auto& comp : components) {
      std::set<int> seen;
      for (const auto& p : comp) seen.insert(labels[static_cast<size_t>(mask.flat_index(p[0], p[1], p[2]))]);
      REQUIRE(seen.size() == 1);
      REQUIRE(oracle_sizes[*seen.begin()] == comp.size());
    }
    ++checked;
  }
  CHECK(checked == 1000);
}

TEST_CASE("connected_components_3d: deterministic envelope ordering") {
  LabelMask mask(Dims3(8, 8, 8), kIso);
  mask(6, 6, 6) = 1;
  mask(1, 1, 1) = 1;
  mask(1, 6, 2) = 1;
  const auto components = connected_components_3d(mask);
  REQUIRE(components.size() == 3);
  CHECK((components[0][0] == Coord3(1, 1, 1)).all());
  CHECK((components[1][0] == Coord3(1, 6, 2)).all());
  CHECK((components[2][0] == Coord3(6, 6, 6)).all());
}

TEST_CASE("measure_load: counting and additivity") {
  LabelMask mask(Dims3(10, 10, 10), kIso);
  CHECK(measure_load(mask) == 0.0);
  for (int i = 0; i < 100; ++i) mask.data()[i * 7] = 1;
  CHECK(measure_load(mask) == doctest::Approx(100.0));

  // additivity over disjoint components
  LabelMask two(Dims3(12, 6, 6), Spacing3(0.5, 0.5, 2.0));
  fixtures::add_ball(two, Coord3(2, 2, 2), 1.4);
  fixtures::add_ball(two, Coord3(9, 3, 3), 1.9);
  const auto components = connected_components_3d(two);
  REQUIRE(components.size() == 2);
  double sum = 0.0;
  for (const auto& comp : components)
    sum += static_cast<double>(comp.size()) * two.voxel_volume_mm3();
  CHECK(measure_load(two) == doctest::Approx(sum));
}

TEST_CASE("extract_instances: volume scales with spacing") {
  Volume3D img(Dims3(6, 6, 6), kIso);
  img.data().setConstant(7.0f);
  LabelMask mask(Dims3(6, 6, 6), kIso);
  for (int z = 2; z <= 3; ++z)
    for (int y = 2; y <= 3; ++y)
      for (int x = 2; x <= 3; ++x) mask(x, y, z) = 1;

  auto instances = extract_instances(img, mask, "s1");
  REQUIRE(instances.size() == 1);
  CHECK(instances[0].volume_mm3 == doctest::Approx(8.0));
  CHECK((instances[0].bbox.lo == Coord3(2, 2, 2)).all());
  CHECK((instances[0].bbox.hi == Coord3(3, 3, 3)).all());
  CHECK((instances[0].patch_mask.dims() == Dims3(2, 2, 2)).all());

  const Spacing3 aniso(0.5, 0.5, 2.0);
  Volume3D img2(Dims3(6, 6, 6), aniso);
  img2.data().setConstant(1.0f);
  LabelMask mask2(Dims3(6, 6, 6), aniso);
  for (int z = 2; z <= 3; ++z)
    for (int y = 2; y <= 3; ++y)
      for (int x = 2; x <= 3; ++x) mask2(x, y, z) = 1;
  auto inst2 = extract_instances(img2, mask2, "s2");
  REQUIRE(inst2.size() == 1);
  CHECK(inst2[0].volume_mm3 == doctest::Approx(4.0));

  // lesion-free subject
  const LabelMask none(Dims3(6, 6, 6), kIso);
  CHECK(extract_instances(img, none, "s3").empty());
}

TEST_CASE("extract_instances: partition reconstructs the mask exactly") {
  const Volume3D img = fixtures::textured_volume(Dims3(14, 13, 12), kIso, 31);
  const LabelMask mask = fixtures::random_mask(Dims3(14, 13, 12), kIso, 32, 0.25);
  const auto instances = extract_instances(img, mask, "s");

  double total = 0.0;
  LabelMask rebuilt(mask.dims(), mask.spacing());
  for (const auto& inst : instances) {
    total += inst.volume_mm3;
    const auto pd = inst.patch_mask.dims();
    for (int z = 0; z < pd[2]; ++z)
      for (int y = 0; y < pd[1]; ++y)
        for (int x = 0; x < pd[0]; ++x)
          if (inst.patch_mask(x, y, z) != 0) {
            const Coord3 h = inst.bbox.lo + Coord3(x, y, z);
            CHECK(rebuilt(h) == 0);  // no voxel in two instances
            rebuilt(h) = 1;
            // patch intensities come from the source image
            CHECK(inst.patch_intensity(x, y, z) == img(h));
          }
  }
  CHECK(total == doctest::Approx(measure_load(mask)));
  CHECK((rebuilt.data() == binarize(mask).data()).all());
}

TEST_CASE("sample_lesion: uniformity and policy errors") {
  lesions::LesionBank bank;
  const int k = 7;
  for (int i = 0; i < k; ++i) {
    lesions::LesionInstance inst;
    inst.id = "s" + std::to_string(i) + "#0";
    inst.source_subject = "s" + std::to_string(i);
    inst.patch_intensity = Volume3D(Dims3(1, 1, 1), kIso, 1.0f);
    inst.patch_mask = LabelMask(Dims3(1, 1, 1), kIso, 1);
    inst.volume_mm3 = 1.0;
    bank.per_subject[inst.source_subject].push_back(bank.instances.size());
    bank.instances.push_back(inst);
  }

  lesions::SamplePolicy cross;
  Rng rng(99);
  std::map<std::string, long long> hits;
  const long long n = 100000;
  for (long long i = 0; i < n; ++i) hits[lesions::sample_lesion(bank, rng, cross).id]++;
  for (const auto& [id, count] : hits) {
    const double p = 1.0 / k;
    const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(n));
    CHECK(std::abs(static_cast<double>(count) / n - p) <= 3 * sigma);
  }

  lesions::SamplePolicy same;
  same.kind = lesions::LesionSourcePolicy::SameImage;
  same.subject = "s3";
  CHECK(lesions::sample_lesion(bank, rng, same).source_subject == "s3");
  same.subject = "lesion-free";
  CHECK_THROWS_AS((void)lesions::sample_lesion(bank, rng, same), DataError);

  lesions::LesionBank empty_bank;
  CHECK_THROWS_AS((void)lesions::sample_lesion(empty_bank, rng, cross), DataError);
}

TEST_CASE("bank of one always returns that instance") {
  lesions::LesionBank bank;
  lesions::LesionInstance inst;
  inst.id = "only#0";
  inst.source_subject = "only";
  inst.patch_intensity = Volume3D(Dims3(1, 1, 1), kIso, 1.0f);
  inst.patch_mask = LabelMask(Dims3(1, 1, 1), kIso, 1);
  bank.per_subject["only"].push_back(0);
  bank.instances.push_back(inst);
  Rng rng(5);
  for (int i = 0; i < 50; ++i)
    CHECK(lesions::sample_lesion(bank, rng, {}).id == "only#0");
}

TEST_CASE("bank build + serialization round trip") {
  fixtures::TempDir tmp("bank_rt");
  const Dims3 dims(10, 10, 10);
  const Volume3D img = fixtures::textured_volume(dims, kIso, 61);
  LabelMask mask(dims, kIso);
  fixtures::add_ball(mask, Coord3(3, 3, 3), 1.5);
  fixtures::add_ball(mask, Coord3(7, 7, 7), 1.1);
  io::write_volume(img, tmp.file("img.nii.gz"));
  io::write_mask(mask, tmp.file("msk.nii.gz"));
  {
    std::ofstream f(tmp.file("m.jsonl"));
    f << R"({"image":"img.nii.gz","mask":"msk.nii.gz","subject":"s1"})" << "\n";
  }
  const auto manifest = io::load_manifest(tmp.file("m.jsonl"));
  const auto bank = lesions::build_lesion_bank(manifest);
  REQUIRE(bank.instances.size() == 2);
  CHECK(bank.min_volume_mm3() <= bank.instances[0].volume_mm3);

  lesions::write_bank(bank, tmp.file("bank"));
  const auto back = lesions::read_bank(tmp.file("bank"));
  REQUIRE(back.instances.size() == bank.instances.size());
  for (size_t i = 0; i < bank.instances.size(); ++i) {
    CHECK(back.instances[i].id == bank.instances[i].id);
    CHECK((back.instances[i].patch_mask.data() == bank.instances[i].patch_mask.data()).all());
    CHECK((back.instances[i].patch_intensity.data() == bank.instances[i].patch_intensity.data()).all());
    CHECK(back.instances[i].volume_mm3 == bank.instances[i].volume_mm3);
    CHECK(back.instances[i].source_fg_std == bank.instances[i].source_fg_std);
  }
}

TEST_CASE("min_lesion_voxels filter drops small components") {
  Volume3D img(Dims3(8, 8, 8), kIso);
  img.data().setConstant(5.0f);
  LabelMask mask(Dims3(8, 8, 8), kIso);
  mask(0, 0, 0) = 1;  // single voxel
  fixtures::add_ball(mask, Coord3(5, 5, 5), 1.5);
  CHECK(extract_instances(img, mask, "s", 1).size() == 2);
  CHECK(extract_instances(img, mask, "s", 2).size() == 1);
}
