// lesionforge: lesion-level 3D data augmentation
//
//   augment    batch augmentation toward sampled target loads
//   populate   insert augmented lesions into one image up to a target load
//   inpaint    remove lesions from one image (one by id, or down to a target)
//   build-map  accumulate a lesion likelihood map from a dataset
//   stats      dataset load statistics, sampler supports, optional bank dump
//   replay     re-execute a provenance record bit-exactly

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include "lesionforge/driver.hpp"
#include "lesionforge/errors.hpp"
#include "lesionforge/log.hpp"

namespace fs = std::filesystem;
using namespace lesionforge;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitRuntime = 4;

struct AugmentCli {
  driver::AugmentationConfig config;
  std::string bank_policy = "cross";
  std::string dist = "uniform";
  std::string map_mode = "lesion";
};

void write_episode_outputs(const driver::EpisodeResult& res, int32_t lesion_class_id,
                           const std::string& out_dir) {
  fs::create_directories(out_dir);
  LabelMask out_mask(res.mask.dims(), res.mask.spacing());
  out_mask.data() = res.mask.data() * lesion_class_id;
  const std::string id = res.record.output_id;
  io::write_volume(res.image, (fs::path(out_dir) / (id + "_image.nii.gz")).string());
  io::write_mask(out_mask, (fs::path(out_dir) / (id + "_mask.nii.gz")).string());
  io::write_provenance(res.record, (fs::path(out_dir) / (id + "_provenance.json")).string());
  std::cout << (fs::path(out_dir) / (id + "_image.nii.gz")).string() << "\n";
}

loadmodel::MapMode parse_map_mode(const std::string& text, int32_t lesion_class_id) {
  loadmodel::MapMode mode;
  if (text == "lesion") {
    mode.kind = loadmodel::MapMode::LesionSum;
    return mode;
  }
  if (text.rfind("organ:", 0) == 0) {
    mode.kind = loadmodel::MapMode::OrganLabel;
    mode.organ_id = std::stoi(text.substr(6));
    if (mode.organ_id == lesion_class_id)
      logging::warn("organ map id equals the lesion class id");
    return mode;
  }
  throw ConfigError("map mode must be 'lesion' or 'organ:<id>', got '" + text + "'");
}

// quick static histogram plot with the sampler supports overlaid
void write_loads_svg(const std::string& path, const std::vector<double>& loads,
                     const std::vector<std::pair<std::string, std::pair<double, double>>>& supports) {
  const int width = 760, height = 420, mleft = 60, mbottom = 60, mtop = 30, mright = 20;
  const double lo = loads.front(), hi = loads.back();
  const double span = hi > lo ? hi - lo : 1.0;
  const int bins = 20;
  std::vector<int> counts(bins, 0);
  for (double v : loads) {
    int b = static_cast<int>((v - lo) / span * bins);
    if (b >= bins) b = bins - 1;
    if (b < 0) b = 0;
    ++counts[static_cast<size_t>(b)];
  }
  const int peak = *std::max_element(counts.begin(), counts.end());
  const double plot_w = width - mleft - mright;
  const double plot_h = height - mtop - mbottom;

  std::ofstream svg(path, std::ios::trunc);
  if (!svg) throw IoError("cannot write plot: " + path);
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
      << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
  for (int b = 0; b < bins; ++b) {
    const double h = peak > 0 ? plot_h * counts[static_cast<size_t>(b)] / peak : 0.0;
    svg << "<rect x='" << mleft + plot_w * b / bins + 1 << "' y='" << mtop + plot_h - h
        << "' width='" << plot_w / bins - 2 << "' height='" << h
        << "' fill='#9ecae1' stroke='#6baed6'/>\n";
  }
  const char* colors[6] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};
  int row = 0;
  for (const auto& [name, range] : supports) {
    const double x0 = mleft + (range.first - lo) / span * plot_w;
    const double x1 = mleft + (range.second - lo) / span * plot_w;
    const double y = mtop + 14.0 * row + 6;
    svg << "<line x1='" << x0 << "' y1='" << y << "' x2='" << std::max(x1, x0 + 2) << "' y2='" << y
        << "' stroke='" << colors[row % 6] << "' stroke-width='5'/>\n"
        << "<text x='" << std::max(x1, x0 + 2) + 6 << "' y='" << y + 4
        << "' font-size='11' font-family='sans-serif'>" << name << "</text>\n";
    ++row;
  }
  svg << "<text x='" << mleft << "' y='" << height - 18
      << "' font-size='12' font-family='sans-serif'>dataset load (mm^3), " << loads.size()
      << " images, range [" << lo << ", " << hi << "]</text>\n</svg>\n";
}

int run_augment(const AugmentCli& cli) {
  driver::AugmentationConfig config = cli.config;
  config.bank_policy = cli.bank_policy == "same" ? lesions::LesionSourcePolicy::SameImage
                                                 : lesions::LesionSourcePolicy::CrossImage;
  config.dist_kind = loadmodel::load_kind_from_string(cli.dist);
  config.map_mode = parse_map_mode(cli.map_mode, config.lesion_class_id);
  const auto paths = driver::augment_dataset(config);
  for (const auto& p : paths) std::cout << p << "\n";
  return kExitOk;
}

int dispatch(int argc, char** argv) {
  CLI::App app{"lesion-level 3D data augmentation"};
  app.require_subcommand(1);

  // ---- augment ----
  AugmentCli aug;
  auto* augment = app.add_subcommand("augment", "augment a dataset toward sampled target loads");
  augment->add_option("--manifest", aug.config.manifest_path, "dataset manifest (.jsonl)")->required();
  augment->add_option("--count", aug.config.count, "number of augmented outputs")->required();
  augment->add_option("--seed", aug.config.seed, "rng seed")->required();
  augment->add_option("--out", aug.config.out_dir, "output directory")->required();
  augment->add_option("--dist", aug.dist, "low|medium|high|uniform|gaussian|real (default uniform)");
  augment->add_option("--bank-policy", aug.bank_policy, "cross|same (default cross)");
  augment->add_option("--lesion-class", aug.config.lesion_class_id, "lesion label id (default 1)");
  augment->add_option("--min-lesion-voxels", aug.config.min_lesion_voxels,
                      "drop bank components smaller than this (default 1)");
  augment->add_option("--inpaint-radius", aug.config.inpaint_radius, "fast-marching radius in px (default 5)");
  augment->add_option("--blur-sigma", aug.config.blur_sigma, "boundary blend sigma in voxels (default 1)");
  augment->add_option("--jobs", aug.config.jobs, "parallel outputs (default 1)");
  augment->add_flag("--skip-failures", aug.config.skip_failures, "keep going when an output fails");
  augment->add_option("--map", aug.config.map_path, "precomputed likelihood map file");
  augment->add_option("--map-mode", aug.map_mode, "lesion | organ:<id> (default lesion)");
  augment->add_option("--scale-min", aug.config.ranges.scale_min, "resize range lower bound");
  augment->add_option("--scale-max", aug.config.ranges.scale_max, "resize range upper bound");
  augment->add_option("--rotate-max", aug.config.ranges.rotate_max_deg, "max rotation in degrees");
  augment->add_option("--flip-prob", aug.config.ranges.flip_prob, "per-axis flip probability");
  augment->add_flag("!--no-noise", aug.config.ranges.noise_enabled, "disable additive noise");

  // ---- populate ----
  struct {
    std::string in, mask, bank, map, out;
    double target = 0.0;
    uint64_t seed = 0;
    int32_t lesion_class = 1;
  } pop;
  auto* populate = app.add_subcommand("populate", "insert augmented lesions up to a target load");
  populate->add_option("--in", pop.in, "input image")->required();
  populate->add_option("--mask", pop.mask, "input lesion mask")->required();
  populate->add_option("--bank", pop.bank, "lesion bank directory")->required();
  populate->add_option("--map", pop.map, "likelihood map file")->required();
  populate->add_option("--target-load", pop.target, "target load in mm^3")->required();
  populate->add_option("--seed", pop.seed, "rng seed")->required();
  populate->add_option("--out", pop.out, "output directory")->required();
  populate->add_option("--lesion-class", pop.lesion_class, "lesion label id (default 1)");

  // ---- inpaint ----
  struct {
    std::string in, mask, out;
    double target = -1.0;
    int lesion_id = -1;
    uint64_t seed = 0;
    int radius = 5;
    double blur_sigma = 1.0;
    int32_t lesion_class = 1;
  } inp;
  auto* inpaint_cmd = app.add_subcommand("inpaint", "remove lesions by id or down to a target load");
  inpaint_cmd->add_option("--in", inp.in, "input image")->required();
  inpaint_cmd->add_option("--mask", inp.mask, "input lesion mask")->required();
  inpaint_cmd->add_option("--out", inp.out, "output directory")->required();
  auto* by_id = inpaint_cmd->add_option("--lesion-id", inp.lesion_id, "component ordinal to remove");
  auto* by_target = inpaint_cmd->add_option("--target-load", inp.target, "target load in mm^3");
  inpaint_cmd->add_option("--seed", inp.seed, "rng seed (target mode)");
  inpaint_cmd->add_option("--inpaint-radius", inp.radius, "fast-marching radius in px (default 5)");
  inpaint_cmd->add_option("--blur-sigma", inp.blur_sigma, "boundary blend sigma (default 1)");
  inpaint_cmd->add_option("--lesion-class", inp.lesion_class, "lesion label id (default 1)");
  by_id->excludes(by_target);

  // ---- build-map ----
  struct {
    std::string manifest, mode = "lesion", out;
    int32_t lesion_class = 1;
  } bm;
  auto* build_map = app.add_subcommand("build-map", "accumulate the lesion likelihood map");
  build_map->add_option("--manifest", bm.manifest, "dataset manifest (.jsonl)")->required();
  build_map->add_option("--mode", bm.mode, "lesion | organ:<id> (default lesion)");
  build_map->add_option("--out", bm.out, "output map file (.nii/.nii.gz/.raw)")->required();
  build_map->add_option("--lesion-class", bm.lesion_class, "lesion label id (default 1)");

  // ---- stats ----
  struct {
    std::string manifest, out, plot, dump_bank;
    int32_t lesion_class = 1;
    int min_voxels = 1;
  } st;
  auto* stats = app.add_subcommand("stats", "dataset load statistics and sampler supports");
  stats->add_option("--manifest", st.manifest, "dataset manifest (.jsonl)")->required();
  stats->add_option("--out", st.out, "write loads + sampler supports as JSON");
  stats->add_option("--plot", st.plot, "write a histogram of dataset loads as SVG");
  stats->add_option("--dump-bank", st.dump_bank, "serialize the lesion bank to this directory");
  stats->add_option("--lesion-class", st.lesion_class, "lesion label id (default 1)");
  stats->add_option("--min-lesion-voxels", st.min_voxels, "bank filter (default 1)");

  // ---- replay ----
  struct {
    std::string provenance, manifest, out;
  } rp;
  auto* replay_cmd = app.add_subcommand("replay", "re-execute a provenance record");
  replay_cmd->add_option("--provenance", rp.provenance, "provenance record (.json)")->required();
  replay_cmd->add_option("--manifest", rp.manifest, "dataset manifest (.jsonl)")->required();
  replay_cmd->add_option("--out", rp.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (augment->parsed()) return run_augment(aug);

  if (populate->parsed()) {
    const Volume3D image = io::read_volume(pop.in);
    const LabelMask mask = binarize(io::read_mask(pop.mask), pop.lesion_class);
    const auto bank = lesions::read_bank(pop.bank);
    const auto map = loadmodel::likelihood_map_from_grid(io::read_map(pop.map));
    Rng rng(pop.seed);
    driver::EpisodeResult res =
        driver::populate_to_target(image, mask, fs::path(pop.in).stem().string(), bank, map,
                                   pop.target, rng, {});
    res.record.output_id = "populate_" + std::to_string(pop.seed);
    res.record.rng_seed = pop.seed;
    res.record.lesion_class_id = pop.lesion_class;
    write_episode_outputs(res, pop.lesion_class, pop.out);
    return kExitOk;
  }

  if (inpaint_cmd->parsed()) {
    if (inp.lesion_id < 0 && inp.target < 0.0)
      throw ConfigError("inpaint: provide --lesion-id or --target-load");
    const Volume3D image = io::read_volume(inp.in);
    const LabelMask mask = binarize(io::read_mask(inp.mask), inp.lesion_class);
    driver::EpisodeOptions opts;
    opts.inpaint_radius = inp.radius;
    opts.blur_sigma = inp.blur_sigma;
    driver::EpisodeResult res = [&] {
      const std::string subject = fs::path(inp.in).stem().string();
      if (inp.lesion_id >= 0)
        return driver::inpaint_single(image, mask, subject, inp.lesion_id, opts);
      Rng rng(inp.seed);
      return driver::inpaint_to_target(image, mask, subject, inp.target, rng, opts);
    }();
    res.record.output_id = "inpaint_" + std::to_string(inp.seed);
    res.record.rng_seed = inp.seed;
    res.record.lesion_class_id = inp.lesion_class;
    write_episode_outputs(res, inp.lesion_class, inp.out);
    return kExitOk;
  }

  if (build_map->parsed()) {
    const auto manifest = io::load_manifest(bm.manifest, bm.lesion_class);
    const auto mode = parse_map_mode(bm.mode, bm.lesion_class);
    const auto map = loadmodel::build_likelihood_map(manifest, mode);
    io::write_map(map.probs, bm.out);
    std::cout << bm.out << "\n";
    return kExitOk;
  }

  if (stats->parsed()) {
    const auto manifest = io::load_manifest(st.manifest, st.lesion_class);
    const auto loads = loadmodel::fit_load_distribution(manifest);

    nlohmann::json j;
    j["schema"] = 1;
    j["images"] = loads.size();
    j["loads_mm3"] = loads;
    nlohmann::json samplers;
    std::vector<std::pair<std::string, std::pair<double, double>>> supports;
    for (const auto kind : {loadmodel::LoadKind::Low, loadmodel::LoadKind::Medium,
                            loadmodel::LoadKind::High, loadmodel::LoadKind::Uniform}) {
      const auto dist = loadmodel::make_load_distribution(kind, loads);
      samplers[loadmodel::to_string(kind)] = {{"lo", dist.lo}, {"hi", dist.hi}};
      supports.push_back({loadmodel::to_string(kind), {dist.lo, dist.hi}});
    }
    const auto gauss = loadmodel::make_load_distribution(loadmodel::LoadKind::Gaussian, loads);
    samplers["gaussian"] = {{"mean", gauss.mean}, {"stddev", gauss.stddev}};
    supports.push_back({"gaussian", {std::max(0.0, gauss.mean - 2 * gauss.stddev),
                                     gauss.mean + 2 * gauss.stddev}});
    samplers["real"] = {{"lo", loads.front()}, {"hi", loads.back()}};
    supports.push_back({"real", {loads.front(), loads.back()}});
    j["samplers"] = samplers;

    if (!st.out.empty()) {
      std::ofstream f(st.out, std::ios::trunc);
      if (!f) throw IoError("cannot write " + st.out);
      f << j.dump(2) << "\n";
      std::cout << st.out << "\n";
    }
    if (!st.plot.empty()) {
      write_loads_svg(st.plot, loads, supports);
      std::cout << st.plot << "\n";
    }
    if (!st.dump_bank.empty()) {
      const auto bank = lesions::build_lesion_bank(manifest, st.min_voxels);
      lesions::write_bank(bank, st.dump_bank);
      std::cout << st.dump_bank << "\n";
    }
    if (st.out.empty() && st.plot.empty() && st.dump_bank.empty())
      std::cout << j.dump(2) << "\n";
    return kExitOk;
  }

  if (replay_cmd->parsed()) {
    const auto record = io::read_provenance(rp.provenance);
    const auto manifest = io::load_manifest(rp.manifest, record.lesion_class_id);
    const auto [image, mask] = driver::replay(record, manifest);
    fs::create_directories(rp.out);
    LabelMask out_mask(mask.dims(), mask.spacing());
    out_mask.data() = mask.data() * record.lesion_class_id;
    const std::string stem = record.output_id.empty() ? "replay" : record.output_id;
    io::write_volume(image, (fs::path(rp.out) / (stem + "_image.nii.gz")).string());
    io::write_mask(out_mask, (fs::path(rp.out) / (stem + "_mask.nii.gz")).string());
    std::cout << (fs::path(rp.out) / (stem + "_image.nii.gz")).string() << "\n";
    return kExitOk;
  }

  return kExitConfig;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const ConfigError& e) {
    logging::error(e.what());
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    logging::error(e.what());
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const DataError& e) {
    logging::error(e.what());
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    logging::error(e.what());
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
