#include "lesionforge/driver.hpp"

#include <atomic>
#include <cctype>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <thread>

#include "lesionforge/errors.hpp"
#include "lesionforge/log.hpp"

namespace fs = std::filesystem;

namespace lesionforge::driver {

namespace {

void run_populate_branch(EpisodeResult& res, long long& lesion_voxels, double v_tar,
                         const lesions::LesionBank& bank, const loadmodel::LikelihoodMap& map,
                         Rng& rng, const EpisodeOptions& opts, const std::string& subject) {
  const double voxvol = res.mask.voxel_volume_mm3();
  lesions::SamplePolicy policy;
  policy.kind = opts.bank_policy;
  policy.subject = subject;
  const double bank_min = bank.min_volume_mm3();

  int strikes = 0;
  for (int iter = 0; iter < opts.max_populate_iters; ++iter) {
    const double v_cur = static_cast<double>(lesion_voxels) * voxvol;
    if (v_cur >= v_tar) break;
    if (bank_min > v_tar - v_cur) {
      if (++strikes >= opts.max_small_gap_strikes) break;
    } else {
      strikes = 0;
    }

    const lesions::LesionInstance& inst = lesions::sample_lesion(bank, rng, policy);

    std::optional<std::pair<Volume3D, LabelMask>> shaped;
    transform::TransformParams params;
    for (int redraw = 0; redraw <= opts.max_transform_redraws && !shaped; ++redraw) {
      params = transform::draw_params(rng, opts.ranges);
      try {
        shaped = transform::apply_spatial(inst.patch_intensity, inst.patch_mask, params);
      } catch (const DegenerateTransformError&) {
        // redraw
      }
    }
    if (!shaped) continue;  // skip this lesion for this iteration

    const Volume3D patch = transform::apply_intensity(shaped->first, shaped->second, params,
                                                      inst.source_fg_mean, inst.source_fg_std);

    for (int attempt = 0; attempt < opts.max_placement_tries; ++attempt) {
      const populate::Placement where =
          populate::sample_placement(map, shaped->second, rng, opts.max_placement_tries);
      try {
        const populate::PlaceStats stats =
            populate::place_lesion_inplace(res.image, res.mask, patch, shaped->second, where.center);
        lesion_voxels += stats.added_voxels;

        io::ProvenanceOp op;
        op.kind = "populate";
        op.source_lesion_id = inst.id;
        op.placement_center = {where.center[0], where.center[1], where.center[2]};
        op.transform_params = transform::to_json(params);
        op.placed_voxels = stats.placed_voxels;
        op.added_voxels = stats.added_voxels;
        op.v_after_mm3 = static_cast<double>(lesion_voxels) * voxvol;
        res.record.operations.push_back(std::move(op));
        break;
      } catch (const PlacementError&) {
        // fully clipped-out support, resample the center
      }
    }
  }
}

void run_inpaint_branch(EpisodeResult& res, long long& lesion_voxels, double v_tar, Rng& rng,
                        const EpisodeOptions& opts) {
  const double voxvol = res.mask.voxel_volume_mm3();
  while (static_cast<double>(lesion_voxels) * voxvol > v_tar) {
    const auto components = lesions::connected_components_3d(res.mask);
    if (components.empty()) break;  // nothing left to remove
    const size_t ordinal = rng.uniform_index(components.size());

    LabelMask lesion(res.mask.dims(), res.mask.spacing());
    for (const Coord3& p : components[ordinal]) lesion(p) = 1;

    const inpaint::InpaintStats stats = inpaint::inpaint_lesion_inplace(
        res.image, res.mask, lesion, opts.inpaint_radius, opts.blur_sigma);
    lesion_voxels -= stats.removed_voxels;

    io::ProvenanceOp op;
    op.kind = "inpaint";
    op.lesion_ordinal = static_cast<int>(ordinal);
    op.inpaint_radius = opts.inpaint_radius;
    op.blur_sigma = opts.blur_sigma;
    op.removed_voxels = stats.removed_voxels;
    op.v_after_mm3 = static_cast<double>(lesion_voxels) * voxvol;
    res.record.operations.push_back(std::move(op));
  }
}

std::string sanitize_id(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s)
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '-');
  return out;
}

uint64_t fnv1a(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const uint8_t*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

loadmodel::LikelihoodMap obtain_map(const AugmentationConfig& config,
                                    const io::DatasetManifest& manifest) {
  if (!config.map_path.empty())
    return loadmodel::likelihood_map_from_grid(io::read_map(config.map_path));

  if (config.cache_map && !config.out_dir.empty()) {
    // The map is a per-dataset artifact; cache it keyed by manifest content
    // and map mode so repeated runs skip the accumulation pass.
    std::ifstream in(config.manifest_path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    uint64_t h = fnv1a(bytes.data(), bytes.size());
    const int mode_tag[3] = {static_cast<int>(config.map_mode.kind), config.map_mode.organ_id,
                             config.lesion_class_id};
    h = fnv1a(mode_tag, sizeof(mode_tag), h);
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
    const std::string cache = (fs::path(config.out_dir) / (std::string("map_cache_") + hex + ".raw")).string();
    if (fs::exists(cache)) {
      logging::debug("likelihood map cache hit", {{"path", cache}});
      return loadmodel::likelihood_map_from_grid(io::read_map(cache));
    }
    loadmodel::LikelihoodMap map = loadmodel::build_likelihood_map(manifest, config.map_mode);
    io::write_map(map.probs, cache);
    return map;
  }
  return loadmodel::build_likelihood_map(manifest, config.map_mode);
}

}  // namespace

EpisodeResult populate_to_target(const Volume3D& host_image, const LabelMask& host_mask,
                                 const std::string& subject, const lesions::LesionBank& bank,
                                 const loadmodel::LikelihoodMap& map, double v_target_mm3,
                                 Rng& rng, const EpisodeOptions& opts) {
  require_same_dims(host_image, host_mask, "populate_to_target");
  if (!(host_image.dims() == map.probs.dims()).all())
    throw DataError("populate_to_target: host and likelihood map geometry differ");

  EpisodeResult res{host_image, host_mask, {}};
  const double voxvol = host_mask.voxel_volume_mm3();
  long long lesion_voxels = count_nonzero(res.mask);
  res.record.source_subject = subject;
  res.record.v_initial_mm3 = static_cast<double>(lesion_voxels) * voxvol;
  res.record.v_target_mm3 = v_target_mm3;

  if (res.record.v_initial_mm3 < v_target_mm3) {
    if (bank.empty())
      throw DataError("populate_to_target: lesion bank is empty but populating is required");
    run_populate_branch(res, lesion_voxels, v_target_mm3, bank, map, rng, opts, subject);
  }
  res.record.v_final_mm3 = static_cast<double>(lesion_voxels) * voxvol;
  return res;
}

EpisodeResult inpaint_to_target(const Volume3D& host_image, const LabelMask& host_mask,
                                const std::string& subject, double v_target_mm3, Rng& rng,
                                const EpisodeOptions& opts) {
  require_same_dims(host_image, host_mask, "inpaint_to_target");
  EpisodeResult res{host_image, host_mask, {}};
  const double voxvol = host_mask.voxel_volume_mm3();
  long long lesion_voxels = count_nonzero(res.mask);
  res.record.source_subject = subject;
  res.record.v_initial_mm3 = static_cast<double>(lesion_voxels) * voxvol;
  res.record.v_target_mm3 = v_target_mm3;

  if (res.record.v_initial_mm3 > v_target_mm3)
    run_inpaint_branch(res, lesion_voxels, v_target_mm3, rng, opts);

  res.record.v_final_mm3 = static_cast<double>(lesion_voxels) * voxvol;
  return res;
}

EpisodeResult inpaint_single(const Volume3D& host_image, const LabelMask& host_mask,
                             const std::string& subject, int lesion_ordinal,
                             const EpisodeOptions& opts) {
  require_same_dims(host_image, host_mask, "inpaint_single");
  EpisodeResult res{host_image, host_mask, {}};
  const double voxvol = host_mask.voxel_volume_mm3();
  long long lesion_voxels = count_nonzero(res.mask);
  res.record.source_subject = subject;
  res.record.v_initial_mm3 = static_cast<double>(lesion_voxels) * voxvol;

  const auto components = lesions::connected_components_3d(res.mask);
  if (lesion_ordinal < 0 || static_cast<size_t>(lesion_ordinal) >= components.size())
    throw DataError("inpaint_single: lesion ordinal out of range (found " +
                    std::to_string(components.size()) + " lesions)");
  LabelMask lesion(res.mask.dims(), res.mask.spacing());
  for (const Coord3& p : components[static_cast<size_t>(lesion_ordinal)]) lesion(p) = 1;
  const inpaint::InpaintStats stats = inpaint::inpaint_lesion_inplace(
      res.image, res.mask, lesion, opts.inpaint_radius, opts.blur_sigma);
  lesion_voxels -= stats.removed_voxels;

  io::ProvenanceOp op;
  op.kind = "inpaint";
  op.lesion_ordinal = lesion_ordinal;
  op.inpaint_radius = opts.inpaint_radius;
  op.blur_sigma = opts.blur_sigma;
  op.removed_voxels = stats.removed_voxels;
  op.v_after_mm3 = static_cast<double>(lesion_voxels) * voxvol;
  res.record.v_target_mm3 = op.v_after_mm3;
  res.record.v_final_mm3 = op.v_after_mm3;
  res.record.operations.push_back(std::move(op));
  return res;
}

EpisodeResult augment_one(const Volume3D& host_image, const LabelMask& host_mask,
                          const std::string& subject, const lesions::LesionBank& bank,
                          const loadmodel::LikelihoodMap& map,
                          const loadmodel::LoadDistribution& dist, Rng& rng,
                          const EpisodeOptions& opts) {
  require_same_dims(host_image, host_mask, "augment_one");
  if (!(host_image.dims() == map.probs.dims()).all())
    throw DataError("augment_one: host and likelihood map geometry differ");

  const double voxvol = host_mask.voxel_volume_mm3();
  const double v_cur = static_cast<double>(count_nonzero(host_mask)) * voxvol;
  const double v_tar = loadmodel::sample_target_load(dist, rng);
  if (v_cur < v_tar)
    return populate_to_target(host_image, host_mask, subject, bank, map, v_tar, rng, opts);
  return inpaint_to_target(host_image, host_mask, subject, v_tar, rng, opts);
}

std::vector<std::string> augment_dataset(const AugmentationConfig& config) {
  if (config.count < 1) throw ConfigError("augment_dataset: count must be >= 1");
  if (config.jobs < 1) throw ConfigError("augment_dataset: jobs must be >= 1");
  if (config.out_dir.empty()) throw ConfigError("augment_dataset: output directory required");

  const io::DatasetManifest manifest = io::load_manifest(config.manifest_path, config.lesion_class_id);
  fs::create_directories(config.out_dir);

  const lesions::LesionBank bank = lesions::build_lesion_bank(manifest, config.min_lesion_voxels);
  const loadmodel::LikelihoodMap map = obtain_map(config, manifest);
  const loadmodel::LoadDistribution dist =
      loadmodel::make_load_distribution(config.dist_kind, loadmodel::fit_load_distribution(manifest));

  logging::info("starting augmentation run",
                {{"outputs", config.count},
                 {"subjects", manifest.entries.size()},
                 {"bank_instances", bank.instances.size()},
                 {"distribution", loadmodel::to_string(config.dist_kind)},
                 {"seed", config.seed}});

  EpisodeOptions opts;
  opts.ranges = config.ranges;
  opts.bank_policy = config.bank_policy;
  opts.inpaint_radius = config.inpaint_radius;
  opts.blur_sigma = config.blur_sigma;

  std::vector<std::string> image_paths(static_cast<size_t>(config.count));
  std::vector<std::string> failures(static_cast<size_t>(config.count));
  std::atomic<int> next{0};
  std::mutex failure_mutex;
  std::exception_ptr first_failure;

  const auto worker = [&] {
    for (;;) {
      const int t = next.fetch_add(1);
      if (t >= config.count) return;
      {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (first_failure && !config.skip_failures) return;
      }
      const uint64_t stream_seed = Rng::derive_stream(config.seed, static_cast<uint64_t>(t));
      Rng rng(stream_seed);
      const size_t host_idx = rng.uniform_index(manifest.entries.size());
      const auto& entry = manifest.entries[host_idx];
      try {
        const Volume3D image = io::read_volume(io::resolve_path(manifest, entry.image));
        const LabelMask labels = io::read_mask(io::resolve_path(manifest, entry.mask));
        const LabelMask binary = binarize(labels, config.lesion_class_id);

        EpisodeResult res = augment_one(image, binary, entry.subject, bank, map, dist, rng, opts);
        if (!res.image.data().isFinite().all())
          throw DataError("augmented image contains non-finite intensities");

        char idx[16];
        std::snprintf(idx, sizeof(idx), "%05d", t);
        const std::string id = "aug_" + std::string(idx) + "_" + sanitize_id(entry.subject);
        res.record.output_id = id;
        res.record.rng_seed = stream_seed;
        res.record.lesion_class_id = config.lesion_class_id;
        res.record.min_lesion_voxels = config.min_lesion_voxels;

        LabelMask out_mask(res.mask.dims(), res.mask.spacing());
        out_mask.data() = res.mask.data() * config.lesion_class_id;

        const std::string img_path = (fs::path(config.out_dir) / (id + "_image.nii.gz")).string();
        io::write_volume(res.image, img_path);
        io::write_mask(out_mask, (fs::path(config.out_dir) / (id + "_mask.nii.gz")).string());
        io::write_provenance(res.record, (fs::path(config.out_dir) / (id + "_provenance.json")).string());
        image_paths[static_cast<size_t>(t)] = img_path;

        logging::info("emitted output",
                      {{"output", id},
                       {"subject", entry.subject},
                       {"v_initial_mm3", res.record.v_initial_mm3},
                       {"v_target_mm3", res.record.v_target_mm3},
                       {"v_final_mm3", res.record.v_final_mm3},
                       {"operations", res.record.operations.size()}});
      } catch (const std::exception& e) {
        logging::error("output failed", {{"index", t}, {"subject", entry.subject}, {"what", e.what()}});
        std::lock_guard<std::mutex> lock(failure_mutex);
        failures[static_cast<size_t>(t)] = e.what();
        if (!first_failure) first_failure = std::current_exception();
      }
    }
  };

  if (config.jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(config.jobs));
    for (int j = 0; j < config.jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  if (first_failure && !config.skip_failures) std::rethrow_exception(first_failure);

  std::vector<std::string> emitted;
  for (auto& p : image_paths)
    if (!p.empty()) emitted.push_back(std::move(p));
  return emitted;
}

std::pair<Volume3D, LabelMask> replay(const io::ProvenanceRecord& record,
                                      const io::DatasetManifest& manifest,
                                      const lesions::LesionBank& bank) {
  const io::ManifestEntry* entry = nullptr;
  for (const auto& e : manifest.entries)
    if (e.subject == record.source_subject) entry = &e;
  if (!entry) throw DataError("replay: source subject missing from manifest: " + record.source_subject);

  Volume3D image = io::read_volume(io::resolve_path(manifest, entry->image));
  LabelMask mask = binarize(io::read_mask(io::resolve_path(manifest, entry->mask)),
                            record.lesion_class_id);

  for (const auto& op : record.operations) {
    if (op.kind == "populate") {
      const lesions::LesionInstance* inst = bank.find(op.source_lesion_id);
      if (!inst) throw DataError("replay: lesion instance not in bank: " + op.source_lesion_id);
      const transform::TransformParams params = transform::params_from_json(op.transform_params);
      const auto shaped = transform::apply_spatial(inst->patch_intensity, inst->patch_mask, params);
      const Volume3D patch = transform::apply_intensity(shaped.first, shaped.second, params,
                                                        inst->source_fg_mean, inst->source_fg_std);
      const Coord3 center(op.placement_center[0], op.placement_center[1], op.placement_center[2]);
      populate::place_lesion_inplace(image, mask, patch, shaped.second, center);
    } else if (op.kind == "inpaint") {
      const auto components = lesions::connected_components_3d(mask);
      if (op.lesion_ordinal < 0 || static_cast<size_t>(op.lesion_ordinal) >= components.size())
        throw DataError("replay: lesion ordinal out of range");
      LabelMask lesion(mask.dims(), mask.spacing());
      for (const Coord3& p : components[static_cast<size_t>(op.lesion_ordinal)]) lesion(p) = 1;
      inpaint::inpaint_lesion_inplace(image, mask, lesion, op.inpaint_radius, op.blur_sigma);
    } else {
      throw DataError("replay: unknown op kind " + op.kind);
    }
  }
  return {std::move(image), std::move(mask)};
}

std::pair<Volume3D, LabelMask> replay(const io::ProvenanceRecord& record,
                                      const io::DatasetManifest& manifest) {
  io::DatasetManifest adjusted = manifest;
  adjusted.lesion_class_id = record.lesion_class_id;
  const lesions::LesionBank bank = lesions::build_lesion_bank(adjusted, record.min_lesion_voxels);
  return replay(record, adjusted, bank);
}

}  // namespace lesionforge::driver
