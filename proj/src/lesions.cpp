#include "lesionforge/lesions.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "lesionforge/errors.hpp"

namespace fs = std::filesystem;

namespace lesionforge::lesions {

double LesionBank::min_volume_mm3() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& inst : instances) m = std::min(m, inst.volume_mm3);
  return m;
}

const LesionInstance* LesionBank::find(const std::string& id) const {
  for (const auto& inst : instances)
    if (inst.id == id) return &inst;
  return nullptr;
}

std::vector<std::vector<Coord3>> connected_components_3d(const LabelMask& mask) {
  const Dims3 d = mask.dims();
  const Eigen::Index n = mask.size();
  std::vector<int32_t> label(static_cast<size_t>(n), 0);
  std::vector<std::vector<Coord3>> components;
  std::vector<Eigen::Index> stack;

  for (Eigen::Index seed = 0; seed < n; ++seed) {
    if (mask.data()[seed] == 0 || label[static_cast<size_t>(seed)] != 0) continue;
    components.emplace_back();
    auto& comp = components.back();
    label[static_cast<size_t>(seed)] = static_cast<int32_t>(components.size());
    stack.clear();
    stack.push_back(seed);
    while (!stack.empty()) {
      const Eigen::Index cur = stack.back();
      stack.pop_back();
      const Coord3 p = mask.coord(cur);
      comp.push_back(p);
      for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0 && dz == 0) continue;
            const int x = p[0] + dx, y = p[1] + dy, z = p[2] + dz;
            if (x < 0 || y < 0 || z < 0 || x >= d[0] || y >= d[1] || z >= d[2]) continue;
            const Eigen::Index q = mask.flat_index(x, y, z);
            if (mask.data()[q] == 0 || label[static_cast<size_t>(q)] != 0) continue;
            label[static_cast<size_t>(q)] = static_cast<int32_t>(components.size());
            stack.push_back(q);
          }
    }
  }

  const auto flat = [&](const Coord3& p) { return mask.flat_index(p[0], p[1], p[2]); };
  for (auto& comp : components)
    std::sort(comp.begin(), comp.end(), [&](const Coord3& a, const Coord3& b) { return flat(a) < flat(b); });

  // Envelope corner ordering; ties broken by the smallest member voxel.
  std::sort(components.begin(), components.end(),
            [&](const std::vector<Coord3>& a, const std::vector<Coord3>& b) {
              Coord3 ka(a[0]), kb(b[0]);
              for (const auto& p : a) ka = ka.min(p);
              for (const auto& p : b) kb = kb.min(p);
              if (ka[2] != kb[2]) return ka[2] < kb[2];
              if (ka[1] != kb[1]) return ka[1] < kb[1];
              if (ka[0] != kb[0]) return ka[0] < kb[0];
              return flat(a[0]) < flat(b[0]);
            });
  return components;
}

double measure_load(const LabelMask& mask) {
  return static_cast<double>(count_nonzero(mask)) * mask.voxel_volume_mm3();
}

std::pair<double, double> foreground_stats(const Volume3D& image) {
  double sum = 0.0;
  long long count = 0;
  for (Eigen::Index i = 0; i < image.size(); ++i) {
    const float v = image.data()[i];
    if (v != 0.0f) {
      sum += static_cast<double>(v);
      ++count;
    }
  }
  const bool use_all = count == 0;
  if (use_all) {
    for (Eigen::Index i = 0; i < image.size(); ++i) sum += static_cast<double>(image.data()[i]);
    count = image.size();
  }
  const double mean = sum / static_cast<double>(count);
  double ss = 0.0;
  for (Eigen::Index i = 0; i < image.size(); ++i) {
    const float v = image.data()[i];
    if (use_all || v != 0.0f) {
      const double dlt = static_cast<double>(v) - mean;
      ss += dlt * dlt;
    }
  }
  const double std_dev = count > 1 ? std::sqrt(ss / static_cast<double>(count - 1)) : 0.0;
  return {mean, std_dev};
}

std::vector<LesionInstance> extract_instances(const Volume3D& image, const LabelMask& mask,
                                              const std::string& subject, int min_voxels) {
  require_same_dims(image, mask, "extract_instances");
  const auto components = connected_components_3d(mask);
  const auto [fg_mean, fg_std] = foreground_stats(image);
  const double voxvol = mask.voxel_volume_mm3();

  std::vector<LesionInstance> instances;
  int ordinal = 0;
  for (const auto& comp : components) {
    if (static_cast<int>(comp.size()) < min_voxels) continue;
    LesionInstance inst;
    inst.id = subject + "#" + std::to_string(ordinal++);
    inst.source_subject = subject;
    Box3 box;
    box.lo = comp[0];
    box.hi = comp[0];
    for (const auto& p : comp) {
      box.lo = box.lo.min(p);
      box.hi = box.hi.max(p);
    }
    inst.bbox = box;
    inst.patch_intensity = crop(image, box);
    inst.patch_mask = LabelMask(box.extent(), mask.spacing());
    for (const auto& p : comp)
      inst.patch_mask(p[0] - box.lo[0], p[1] - box.lo[1], p[2] - box.lo[2]) = 1;
    inst.volume_mm3 = static_cast<double>(comp.size()) * voxvol;
    inst.source_fg_mean = fg_mean;
    inst.source_fg_std = fg_std;
    instances.push_back(std::move(inst));
  }
  return instances;
}

LesionBank build_lesion_bank(const io::DatasetManifest& manifest, int min_voxels) {
  LesionBank bank;
  bank.lesion_class_id = manifest.lesion_class_id;
  bank.min_lesion_voxels = min_voxels;
  for (const auto& entry : manifest.entries) {
    const Volume3D image = io::read_volume(io::resolve_path(manifest, entry.image));
    const LabelMask labels = io::read_mask(io::resolve_path(manifest, entry.mask));
    const LabelMask binary = binarize(labels, manifest.lesion_class_id);
    auto instances = extract_instances(image, binary, entry.subject, min_voxels);
    for (auto& inst : instances) {
      bank.per_subject[entry.subject].push_back(bank.instances.size());
      bank.instances.push_back(std::move(inst));
    }
  }
  return bank;
}

const LesionInstance& sample_lesion(const LesionBank& bank, Rng& rng, const SamplePolicy& policy) {
  if (policy.kind == LesionSourcePolicy::CrossImage) {
    if (bank.empty()) throw DataError("sample_lesion: bank is empty");
    return bank.instances[rng.uniform_index(bank.instances.size())];
  }
  const auto it = bank.per_subject.find(policy.subject);
  if (it == bank.per_subject.end() || it->second.empty())
    throw DataError("sample_lesion: no lesions for subject " + policy.subject);
  return bank.instances[it->second[rng.uniform_index(it->second.size())]];
}

void write_bank(const LesionBank& bank, const std::string& dir) {
  fs::create_directories(dir);
  nlohmann::json index;
  index["schema"] = 1;
  index["lesion_class_id"] = bank.lesion_class_id;
  index["min_lesion_voxels"] = bank.min_lesion_voxels;
  index["instances"] = nlohmann::json::array();
  char name[64];
  for (size_t i = 0; i < bank.instances.size(); ++i) {
    const auto& inst = bank.instances[i];
    std::snprintf(name, sizeof(name), "inst_%05zu", i);
    const std::string img = std::string(name) + "_img.raw";
    const std::string msk = std::string(name) + "_msk.raw";
    io::write_volume(inst.patch_intensity, (fs::path(dir) / img).string());
    io::write_mask(inst.patch_mask, (fs::path(dir) / msk).string());
    nlohmann::json j;
    j["id"] = inst.id;
    j["subject"] = inst.source_subject;
    j["bbox"] = {inst.bbox.lo[0], inst.bbox.lo[1], inst.bbox.lo[2],
                 inst.bbox.hi[0], inst.bbox.hi[1], inst.bbox.hi[2]};
    j["volume_mm3"] = inst.volume_mm3;
    j["source_fg_mean"] = inst.source_fg_mean;
    j["source_fg_std"] = inst.source_fg_std;
    j["image"] = img;
    j["mask"] = msk;
    index["instances"].push_back(std::move(j));
  }
  std::ofstream out(fs::path(dir) / "index.json", std::ios::trunc);
  if (!out) throw IoError("cannot write bank index in " + dir);
  out << index.dump(2) << "\n";
}

LesionBank read_bank(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "index.json");
  if (!in) throw IoError("cannot open bank index in " + dir);
  nlohmann::json index;
  try {
    in >> index;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad bank index in " + dir + ": " + e.what());
  }
  if (index.value("schema", -1) != 1) throw DataError("unsupported bank schema in " + dir);
  LesionBank bank;
  bank.lesion_class_id = index.value("lesion_class_id", 1);
  bank.min_lesion_voxels = index.value("min_lesion_voxels", 1);
  for (const auto& j : index.at("instances")) {
    LesionInstance inst;
    inst.id = j.at("id").get<std::string>();
    inst.source_subject = j.at("subject").get<std::string>();
    const auto& b = j.at("bbox");
    inst.bbox.lo = Coord3(b[0].get<int>(), b[1].get<int>(), b[2].get<int>());
    inst.bbox.hi = Coord3(b[3].get<int>(), b[4].get<int>(), b[5].get<int>());
    inst.volume_mm3 = j.at("volume_mm3").get<double>();
    inst.source_fg_mean = j.at("source_fg_mean").get<double>();
    inst.source_fg_std = j.at("source_fg_std").get<double>();
    inst.patch_intensity = io::read_volume((fs::path(dir) / j.at("image").get<std::string>()).string());
    inst.patch_mask = io::read_mask((fs::path(dir) / j.at("mask").get<std::string>()).string());
    if (count_nonzero(inst.patch_mask) == 0)
      throw DataError("bank instance has empty mask: " + inst.id);
    bank.per_subject[inst.source_subject].push_back(bank.instances.size());
    bank.instances.push_back(std::move(inst));
  }
  return bank;
}

}  // namespace lesionforge::lesions
