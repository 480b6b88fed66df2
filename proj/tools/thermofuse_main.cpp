// thermofuse: pulse thermography inspection pipeline.
//
//   simulate     synthesize specimens + ground truth into a raw dataset
//   preprocess   compress raw sequences into modality tensors (no augmentation)
//   augment      expand a raw dataset into stored training replicas
//   train        fit a fusion model and write metrics + predictions
//   eval         score a checkpoint on one split
//   sweep-lambda retrain across depth-loss weights and tabulate the trade-off
//   report       aggregate run directories into one report
//
// Every command prints its effective configuration as a JSON document on
// stdout and fails with a one-line "error: <category>: <message>" on stderr.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "thermofuse/augment.hpp"
#include "thermofuse/compress.hpp"
#include "thermofuse/dataset.hpp"
#include "thermofuse/errors.hpp"
#include "thermofuse/report.hpp"
#include "thermofuse/rng.hpp"
#include "thermofuse/sequence_io.hpp"
#include "thermofuse/simulate.hpp"
#include "thermofuse/train.hpp"

namespace tf = thermofuse;
namespace fs = std::filesystem;

namespace {

tf::ordered_json read_json_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw tf::IoError("cannot open " + p.string());
  auto j = tf::ordered_json::parse(f, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw tf::FormatError("not a JSON object: " + p.string());
  return j;
}

void echo_config(const std::string& command, tf::ordered_json body) {
  tf::ordered_json out;
  out["command"] = command;
  for (auto& [k, v] : body.items()) out[k] = std::move(v);
  std::cout << out.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// simulate

// Generation policy around SpecimenSpec: acquisition geometry plus ranges for
// randomly placed circular defects. Split sizes are optional; by default all
// samples land in train.
struct SimPolicy {
  tf::SpecimenSpec specimen;  // defects field ignored; drawn per sample
  int n_t = 160;
  int n_y = 64;
  int n_x = 64;
  double frame_rate_hz = 50.0;
  int pulse_frame = 0;
  int defects_min = 1;
  int defects_max = 3;
  double radius_min_px = 4.0;
  double radius_max_px = 9.0;
  double margin_px = 6.0;
  int train_n = -1, val_n = 0, test_n = 0;  // train_n < 0: everything train

  void validate(int count) const {
    tf::SpecimenSpec probe = specimen;
    probe.defects.clear();
    probe.validate();
    if (specimen.class_depths_mm.empty())
      throw tf::ConfigError("simulate: class_depths_mm must be non-empty");
    if (n_t < 2 || n_y < 1 || n_x < 1 || frame_rate_hz <= 0.0)
      throw tf::ConfigError("simulate: bad acquisition geometry");
    if (pulse_frame < 0 || pulse_frame >= n_t)
      throw tf::ConfigError("simulate: pulse_frame outside sequence");
    if (defects_min < 0 || defects_max < defects_min)
      throw tf::ConfigError("simulate: bad defect count range");
    if (radius_min_px <= 0.0 || radius_max_px < radius_min_px)
      throw tf::ConfigError("simulate: bad defect radius range");
    if (margin_px < 0.0 || 2.0 * margin_px >= std::min(n_y, n_x) - 1)
      throw tf::ConfigError("simulate: margin leaves no room for defect centers");
    if (count < 1) throw tf::ConfigError("simulate: count must be >= 1");
    if (train_n >= 0 && train_n + val_n + test_n != count)
      throw tf::ConfigError("simulate: split sizes must sum to count");
  }
};

SimPolicy sim_policy_from_json(const tf::ordered_json& j) {
  SimPolicy p;
  auto& s = p.specimen;
  s.plate_thickness_mm = j.value("plate_thickness_mm", s.plate_thickness_mm);
  s.thermal_diffusivity_mm2_s = j.value("thermal_diffusivity_mm2_s", s.thermal_diffusivity_mm2_s);
  s.pulse_energy_au = j.value("pulse_energy_au", s.pulse_energy_au);
  s.noise_std_au = j.value("noise_std_au", s.noise_std_au);
  if (j.contains("class_depths_mm"))
    s.class_depths_mm = j["class_depths_mm"].get<std::vector<double>>();
  p.n_t = j.value("n_t", p.n_t);
  p.n_y = j.value("n_y", p.n_y);
  p.n_x = j.value("n_x", p.n_x);
  p.frame_rate_hz = j.value("frame_rate_hz", p.frame_rate_hz);
  p.pulse_frame = j.value("pulse_frame", p.pulse_frame);
  p.defects_min = j.value("defects_min", p.defects_min);
  p.defects_max = j.value("defects_max", p.defects_max);
  p.radius_min_px = j.value("radius_min_px", p.radius_min_px);
  p.radius_max_px = j.value("radius_max_px", p.radius_max_px);
  p.margin_px = j.value("margin_px", p.margin_px);
  if (j.contains("splits")) {
    const auto& sp = j["splits"];
    p.train_n = sp.value("train", 0);
    p.val_n = sp.value("val", 0);
    p.test_n = sp.value("test", 0);
  }
  return p;
}

void sim_policy_to_json(tf::ordered_json& j, const SimPolicy& p) {
  j["plate_thickness_mm"] = p.specimen.plate_thickness_mm;
  j["thermal_diffusivity_mm2_s"] = p.specimen.thermal_diffusivity_mm2_s;
  j["pulse_energy_au"] = p.specimen.pulse_energy_au;
  j["noise_std_au"] = p.specimen.noise_std_au;
  j["class_depths_mm"] = p.specimen.class_depths_mm;
  j["n_t"] = p.n_t;
  j["n_y"] = p.n_y;
  j["n_x"] = p.n_x;
  j["frame_rate_hz"] = p.frame_rate_hz;
  j["pulse_frame"] = p.pulse_frame;
  j["defects_min"] = p.defects_min;
  j["defects_max"] = p.defects_max;
  j["radius_min_px"] = p.radius_min_px;
  j["radius_max_px"] = p.radius_max_px;
  j["margin_px"] = p.margin_px;
  if (p.train_n >= 0)
    j["splits"] = {{"train", p.train_n}, {"val", p.val_n}, {"test", p.test_n}};
}

void run_simulate(const fs::path& spec_path, const fs::path& out, int count,
                  std::uint64_t seed) {
  const SimPolicy policy = sim_policy_from_json(read_json_file(spec_path));
  policy.validate(count);
  fs::create_directories(out);

  tf::ordered_json echo;
  sim_policy_to_json(echo, policy);
  echo_config("simulate",
              {{"spec", std::move(echo)}, {"out", out.string()}, {"count", count},
               {"seed", seed}});

  tf::DatasetIndex index;
  const int n_classes = static_cast<int>(policy.specimen.class_depths_mm.size());
  for (int i = 0; i < count; ++i) {
    char name[16];
    std::snprintf(name, sizeof name, "s%04d", i);
    const std::string id = name;

    tf::Rng draw(tf::mix_seed(seed, tf::fnv1a64("defects"), static_cast<std::uint64_t>(i)));
    tf::SpecimenSpec spec = policy.specimen;
    spec.defects.clear();
    const int n_def = policy.defects_min +
                      static_cast<int>(draw.below(static_cast<std::uint64_t>(
                          policy.defects_max - policy.defects_min + 1)));
    for (int d = 0; d < n_def; ++d) {
      tf::DefectSpec def;
      def.center_y = draw.uniform(policy.margin_px, policy.n_y - 1 - policy.margin_px);
      def.center_x = draw.uniform(policy.margin_px, policy.n_x - 1 - policy.margin_px);
      def.radius_px = draw.uniform(policy.radius_min_px, policy.radius_max_px);
      def.depth_mm = policy.specimen.class_depths_mm[draw.below(
          static_cast<std::uint64_t>(n_classes))];
      spec.defects.push_back(def);
    }

    const std::uint64_t sim_seed =
        tf::mix_seed(seed, tf::fnv1a64("noise"), static_cast<std::uint64_t>(i));
    auto [seq, gt] = tf::simulate_pulse_sequence(spec, policy.n_t, policy.n_y, policy.n_x,
                                                 policy.frame_rate_hz, sim_seed,
                                                 policy.pulse_frame, id);

    tf::DatasetEntry e;
    e.id = id;
    e.sequence_path = id + ".pts";
    e.mask_path = id + "_mask.pgm";
    e.depth_path = id + "_depth.pfm";
    e.class_depths_path = id + "_classes.json";
    if (policy.train_n < 0)
      e.split = "train";
    else if (i < policy.train_n)
      e.split = "train";
    else if (i < policy.train_n + policy.val_n)
      e.split = "val";
    else
      e.split = "test";
    tf::save_sequence(seq, out / e.sequence_path);
    tf::save_ground_truth(gt, out / e.mask_path, out / e.depth_path,
                          out / e.class_depths_path);
    index.entries.push_back(std::move(e));
  }
  tf::save_index(index, out / "index.json");
}

// ---------------------------------------------------------------------------
// preprocess

// Same on-disk layout as the augmentation writer, but one un-augmented
// passthrough per source: full frame set, no noise, stems "<id>_full".
void run_preprocess(const fs::path& in, const fs::path& out, int pca_j, int tsr_degree,
                    std::uint64_t seed) {
  if (pca_j < 1) throw tf::ConfigError("preprocess: --pca-j must be >= 1");
  if (tsr_degree < 1) throw tf::ConfigError("preprocess: --tsr-degree must be >= 1");
  const tf::DatasetIndex index = tf::load_index(in / "index.json");

  tf::AugmentationConfig cfg;
  cfg.n_segments = 1;
  cfg.factor = 1;
  cfg.noise_variance = 0.0;
  cfg.rotation_deg = 0.0;
  cfg.translate_frac = 0.0;
  cfg.shear_deg = 0.0;
  cfg.flip_prob = 0.0;
  cfg.seed = seed;
  cfg.pca_channels = pca_j;
  cfg.tsr_degree = tsr_degree;

  {
    tf::ordered_json jc;
    tf::to_json(jc, cfg);
    echo_config("preprocess", {{"in", in.string()}, {"out", out.string()},
                               {"pca_j", pca_j}, {"tsr_degree", tsr_degree},
                               {"seed", seed}, {"config", std::move(jc)}});
  }

  fs::create_directories(out / "train");
  fs::create_directories(out / "val");
  fs::create_directories(out / "test");
  tf::ordered_json manifest;
  manifest["config"] = tf::ordered_json::object();
  tf::to_json(manifest["config"], cfg);
  manifest["samples"] = tf::ordered_json::array();

  for (const auto& e : index.entries) {
    const std::string split = e.split.empty() ? "train" : e.split;
    if (split != "train" && split != "val" && split != "test")
      throw tf::ConfigError("preprocess: entry with unknown split: " + e.id);
    const tf::ThermalSequence seq = tf::load_sequence(in / e.sequence_path);
    const tf::GroundTruth gt = tf::load_ground_truth(in / e.mask_path, in / e.depth_path,
                                                     in / e.class_depths_path);
    const tf::PcaTensor pca = tf::pca_images(tf::standardize(seq), pca_j);
    const tf::TsrTensor tsr = tf::tsr_images(seq, tsr_degree);
    const std::string stem = e.id + "_full";
    const fs::path dir = out / split;
    tf::save_pca(pca, e.id, dir / (stem + "_pca.ptm"));
    tf::save_tsr(tsr, e.id, dir / (stem + "_tsr.ptm"));
    tf::save_ground_truth(gt, dir / (stem + "_mask.pgm"), dir / (stem + "_depth.pfm"),
                          dir / (stem + "_classes.json"));
    tf::ordered_json je;
    je["split"] = split;
    je["source_id"] = e.id;
    je["replica"] = -1;
    je["stem"] = stem;
    je["frame_indices"] = tf::ordered_json::array();
    je["noise_seed"] = 0;
    manifest["samples"].push_back(std::move(je));
  }

  std::ofstream f(out / "manifest.json", std::ios::binary);
  if (!f) throw tf::IoError("cannot write " + (out / "manifest.json").string());
  f << manifest.dump(2) << '\n';
  if (!f.good()) throw tf::IoError("short write: " + (out / "manifest.json").string());
}

// ---------------------------------------------------------------------------
// augment

void run_augment(const fs::path& in, const fs::path& out, const fs::path& config_path,
                 bool seed_given, std::uint64_t seed) {
  tf::AugmentationConfig cfg = tf::augmentation_config_from_json(read_json_file(config_path));
  if (seed_given) cfg.seed = seed;
  cfg.validate();
  const tf::DatasetIndex index = tf::load_index(in / "index.json");
  {
    tf::ordered_json jc;
    tf::to_json(jc, cfg);
    echo_config("augment", {{"in", in.string()}, {"out", out.string()},
                            {"config", std::move(jc)}});
  }
  tf::write_augmented_dataset(index, cfg, in, out);
}

// ---------------------------------------------------------------------------
// train / eval / sweep / report

tf::RunConfig load_run_config(const fs::path& config_path, bool seed_given,
                              std::uint64_t seed) {
  tf::RunConfig cfg = tf::run_config_from_json(read_json_file(config_path));
  if (seed_given) cfg.seed = seed;
  cfg.validate();
  return cfg;
}

void run_train(const fs::path& config_path, bool seed_given, std::uint64_t seed) {
  const tf::RunConfig cfg = load_run_config(config_path, seed_given, seed);
  {
    tf::ordered_json jc;
    tf::to_json(jc, cfg);
    echo_config("train", {{"config", std::move(jc)}});
  }
  const tf::LoadedDataset ds = tf::load_augmented_dataset(cfg.data_dir);
  tf::run_experiment(cfg, ds);
}

void run_eval(const fs::path& ckpt, const std::string& split_name, const fs::path& out,
              const std::string& data_override) {
  const tf::RunCheckpoint rc = tf::load_run_checkpoint(ckpt);
  tf::RunConfig cfg = rc.config;
  if (!data_override.empty()) cfg.data_dir = data_override;
  {
    tf::ordered_json jc;
    tf::to_json(jc, cfg);
    echo_config("eval", {{"checkpoint", ckpt.string()}, {"split", split_name},
                         {"out", out.string()}, {"config", std::move(jc)}});
  }
  const tf::LoadedDataset ds = tf::load_augmented_dataset(cfg.data_dir);
  const tf::LoadedSplit& split = ds.split(split_name);
  const tf::EvalResult ev = tf::evaluate(rc.model, split, cfg);
  fs::create_directories(out);
  tf::write_metrics_json({ev.report}, out / "metrics.json");
  tf::write_predictions(ev, split, out / "predictions");
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      grid.push_back(v);
    } catch (const std::exception&) {
      throw tf::ConfigError("sweep-lambda: bad grid entry: " + item);
    }
  }
  if (grid.empty()) throw tf::ConfigError("sweep-lambda: empty grid");
  return grid;
}

void run_sweep(const fs::path& config_path, const std::string& grid_text, bool seed_given,
               std::uint64_t seed) {
  tf::RunConfig cfg = load_run_config(config_path, seed_given, seed);
  const std::vector<double> grid =
      grid_text.empty() ? cfg.lambda_grid : parse_grid(grid_text);
  cfg.lambda_grid = grid;
  {
    tf::ordered_json jc;
    tf::to_json(jc, cfg);
    echo_config("sweep-lambda", {{"config", std::move(jc)}, {"grid", grid}});
  }
  const tf::LoadedDataset ds = tf::load_augmented_dataset(cfg.data_dir);
  const auto points = tf::sweep_lambda(cfg, ds, grid);
  fs::create_directories(cfg.out_dir);
  tf::write_sweep_csv(points, fs::path(cfg.out_dir) / "sweep.csv");
}

void run_report(const fs::path& in, const fs::path& out) {
  echo_config("report", {{"in", in.string()}, {"out", out.string()}});
  if (!fs::is_directory(in)) throw tf::IoError("report: not a directory: " + in.string());

  std::vector<fs::path> found;
  for (const auto& entry : fs::recursive_directory_iterator(in)) {
    if (entry.is_regular_file() && entry.path().filename() == "metrics.json")
      found.push_back(entry.path());
  }
  std::sort(found.begin(), found.end());
  if (found.empty())
    throw tf::ConfigError("report: no metrics.json under " + in.string());

  std::vector<tf::MetricsReport> reports;
  for (const auto& p : found) {
    auto batch = tf::read_metrics_json(p);
    reports.insert(reports.end(), batch.begin(), batch.end());
  }
  fs::create_directories(out);
  tf::write_metrics_json(reports, out / "metrics.json");
  tf::write_curves_csv(reports, out / "curves.csv");
  tf::write_ablation_csv(reports, out / "ablation.csv");

  // Carry the per-sample prediction images along, one directory per run.
  for (const auto& p : found) {
    const fs::path src = p.parent_path() / "predictions";
    if (!fs::is_directory(src)) continue;
    std::string tag = fs::relative(p.parent_path(), in).string();
    if (tag == ".") tag = "run";
    std::replace(tag.begin(), tag.end(), '/', '_');
    fs::create_directories(out / "predictions" / tag);
    for (const auto& f : fs::directory_iterator(src))
      fs::copy_file(f.path(), out / "predictions" / tag / f.path().filename(),
                    fs::copy_options::overwrite_existing);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"thermofuse: pulse thermography inspection pipeline"};
  app.require_subcommand(1);

  std::string spec_path, in_dir, out_dir, config_path, ckpt_path;
  std::string split_name = "test", grid_text, data_override;
  int count = 1, pca_j = tf::kDefaultPcaChannels, tsr_degree = tf::kDefaultTsrDegree;
  std::uint64_t seed = 0;
  bool seed_given = false;

  auto add_seed = [&](CLI::App* sub) {
    sub->add_option_function<std::uint64_t>(
        "--seed",
        [&](std::uint64_t s) {
          seed = s;
          seed_given = true;
        },
        "override the random seed");
  };

  auto* sim = app.add_subcommand("simulate", "synthesize a raw dataset");
  sim->add_option("--spec", spec_path, "generation policy (JSON)")->required();
  sim->add_option("--out", out_dir, "output dataset directory")->required();
  sim->add_option("--count", count, "number of specimens")->required();
  add_seed(sim);
  sim->callback([&] { run_simulate(spec_path, out_dir, count, seed); });

  auto* pre = app.add_subcommand("preprocess", "compress sequences into modality tensors");
  pre->add_option("--in", in_dir, "raw dataset directory")->required();
  pre->add_option("--out", out_dir, "output directory")->required();
  pre->add_option("--pca-j", pca_j, "retained principal components");
  pre->add_option("--tsr-degree", tsr_degree, "log-log polynomial degree");
  add_seed(pre);
  pre->callback([&] { run_preprocess(in_dir, out_dir, pca_j, tsr_degree, seed); });

  auto* aug = app.add_subcommand("augment", "expand a raw dataset into replicas");
  aug->add_option("--in", in_dir, "raw dataset directory")->required();
  aug->add_option("--out", out_dir, "output directory")->required();
  aug->add_option("--config", config_path, "augmentation config (JSON)")->required();
  add_seed(aug);
  aug->callback([&] { run_augment(in_dir, out_dir, config_path, seed_given, seed); });

  auto* tr = app.add_subcommand("train", "train a model and write run artifacts");
  tr->add_option("--config", config_path, "run config (JSON)")->required();
  add_seed(tr);
  tr->callback([&] { run_train(config_path, seed_given, seed); });

  auto* ev = app.add_subcommand("eval", "score a checkpoint on one split");
  ev->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
  ev->add_option("--split", split_name, "train | val | test");
  ev->add_option("--out", out_dir, "output directory")->required();
  ev->add_option("--data", data_override, "override the dataset directory");
  add_seed(ev);
  ev->callback([&] { run_eval(ckpt_path, split_name, out_dir, data_override); });

  auto* sw = app.add_subcommand("sweep-lambda", "retrain across depth-loss weights");
  sw->add_option("--config", config_path, "run config (JSON)")->required();
  sw->add_option("--grid", grid_text, "comma-separated lambda values");
  add_seed(sw);
  sw->callback([&] { run_sweep(config_path, grid_text, seed_given, seed); });

  auto* rep = app.add_subcommand("report", "aggregate run directories");
  rep->add_option("--in", in_dir, "directory of runs")->required();
  rep->add_option("--out", out_dir, "report output directory")->required();
  add_seed(rep);
  rep->callback([&] { run_report(in_dir, out_dir); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "error: cli: " << e.what() << '\n';
    return 2;
  } catch (const tf::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
