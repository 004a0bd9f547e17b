// Stage-oriented command line for the pseudo-supervision pipeline:
// synth, mine, pgf, split, ssod-sim, eval, and the end-to-end pipeline.
#include <algorithm>
#include <array>
#include <cstdint>
#include <exception>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sos/config.hpp"
#include "sos/data.hpp"
#include "sos/error.hpp"
#include "sos/eval.hpp"
#include "sos/log.hpp"
#include "sos/mining.hpp"
#include "sos/pgf.hpp"
#include "sos/pipeline.hpp"
#include "sos/split.hpp"
#include "sos/ssod.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;

struct CommonArgs {
  std::string manifest;
  std::string scores;
  std::string rois;
  std::string config;
  std::string out;
  std::string preset;
  std::string params;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::int64_t k = -1;
};

sos::PipelineConfig resolve_config(const CommonArgs& args) {
  const std::string fallback = args.preset.empty() ? "synthetic" : args.preset;
  sos::PipelineConfig cfg = args.config.empty()
                                ? sos::preset_config(fallback)
                                : sos::load_pipeline_config(args.config, fallback);
  if (args.k >= 0) {
    cfg.split_k = args.k;
    cfg.ssod.k_labeled = args.k;
  }
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) sos::fail(sos::ErrorKind::kIo, "cannot open " + path + " for writing");
  out << text;
  out.flush();
  if (!out) sos::fail(sos::ErrorKind::kIo, "write failed: " + path);
}

// Group a detections file by manifest image. Every manifest image gets an
// entry; ids outside the manifest are rejected.
std::map<std::string, const sos::ImageDetections*> index_detections(
    const std::vector<sos::ImageDetections>& detections,
    const sos::DatasetManifest& manifest) {
  std::map<std::string, const sos::ImageDetections*> by_id;
  for (const auto& d : detections) {
    if (manifest.find(d.image_id) == nullptr) {
      sos::fail(sos::ErrorKind::kValidation,
                "detections reference unknown image \"" + d.image_id + "\"");
    }
    by_id[d.image_id] = &d;
  }
  return by_id;
}

sos::Box clamp_to_image(sos::Box b, const sos::ImageRecord& rec) {
  b.x1 = std::min(std::max(b.x1, 0.0), rec.width);
  b.y1 = std::min(std::max(b.y1, 0.0), rec.height);
  b.x2 = std::min(std::max(b.x2, b.x1), rec.width);
  b.y2 = std::min(std::max(b.y2, b.y1), rec.height);
  return b;
}

// Rebuild the per-image score matrix from detections lines: distinct boxes
// in first-appearance order become the proposals, each (box, class) entry
// fills one matrix cell (duplicates keep the highest score).
void scores_from_detections(const sos::ImageDetections& detections,
                            const sos::ImageRecord& rec, int n_classes,
                            std::vector<sos::Box>& proposals,
                            sos::Matrix& scores) {
  proposals.clear();
  std::map<std::array<double, 4>, std::size_t> index;
  std::vector<std::pair<std::size_t, const sos::ScoredBox*>> entries;
  for (const sos::ScoredBox& det : detections.detections) {
    if (det.class_id >= n_classes) {
      sos::fail(sos::ErrorKind::kValidation,
                "detection class out of range in \"" + rec.image_id + "\"");
    }
    const sos::Box b = clamp_to_image(det.box, rec);
    const std::array<double, 4> key{b.x1, b.y1, b.x2, b.y2};
    auto [it, inserted] = index.emplace(key, proposals.size());
    if (inserted) proposals.push_back(b);
    entries.emplace_back(it->second, &det);
  }
  scores = sos::Matrix(static_cast<std::size_t>(n_classes), proposals.size(), 0.0);
  for (const auto& [column, det] : entries) {
    auto& cell = scores(static_cast<std::size_t>(det->class_id), column);
    cell = std::max(cell, det->score);
  }
}

int cmd_synth(const CommonArgs& args, std::int64_t n_images, int n_classes,
              double noise, const std::string& out_manifest,
              const std::string& out_scores, const std::string& out_gt) {
  const sos::SyntheticDataset data =
      sos::generate_synthetic_dataset(args.seed, n_images, n_classes, noise);
  sos::save_manifest(data.train, out_manifest);
  sos::save_manifest(data.groundtruth, out_gt);

  // Scores become detections lines: one entry per proposal and class.
  std::vector<sos::ImageDetections> lines;
  for (std::size_t i = 0; i < data.train.images.size(); ++i) {
    const sos::ImageRecord& rec = data.train.images[i];
    sos::ImageDetections d;
    d.image_id = rec.image_id;
    const sos::Matrix& m = data.scores[i];
    for (std::size_t j = 0; j < rec.proposals->size(); ++j) {
      for (std::size_t c = 0; c < m.rows(); ++c) {
        d.detections.push_back(sos::ScoredBox{(*rec.proposals)[j], m(c, j),
                                              static_cast<int>(c)});
      }
    }
    lines.push_back(std::move(d));
  }
  sos::save_detections(lines, out_scores);
  return kExitOk;
}

int cmd_mine(const CommonArgs& args) {
  const sos::PipelineConfig cfg = resolve_config(args);
  const sos::DatasetManifest manifest = sos::load_manifest(args.manifest);
  const auto detections = sos::load_detections(args.scores);
  const auto by_id = index_detections(detections, manifest);

  std::vector<sos::ImageDetections> out(manifest.images.size());
  for (std::size_t i = 0; i < manifest.images.size(); ++i) {
    const sos::ImageRecord& rec = manifest.images[i];
    out[i].image_id = rec.image_id;
    const auto it = by_id.find(rec.image_id);
    if (it == by_id.end() || it->second->detections.empty()) continue;
    std::vector<sos::Box> proposals;
    sos::Matrix scores;
    scores_from_detections(*it->second, rec, manifest.num_classes(), proposals,
                           scores);
    out[i].detections =
        sos::mine_seed_boxes(proposals, scores, rec.active_labels, cfg.mining);
  }
  sos::save_detections(out, args.out);
  return kExitOk;
}

int cmd_pgf(const CommonArgs& args) {
  const sos::PipelineConfig cfg = resolve_config(args);
  sos::DatasetManifest manifest = sos::load_manifest(args.manifest);
  const auto detections = sos::load_detections(args.scores);
  const auto by_id = index_detections(detections, manifest);

  for (sos::ImageRecord& rec : manifest.images) {
    std::vector<sos::ScoredBox> dets;
    if (const auto it = by_id.find(rec.image_id); it != by_id.end()) {
      dets = it->second->detections;
      for (sos::ScoredBox& d : dets) d.box = clamp_to_image(d.box, rec);
    }
    rec.pseudo_gt = sos::pgf_filter(dets, rec.active_labels,
                                    manifest.num_classes(), cfg.pgf);
  }
  sos::save_manifest(manifest, args.out);
  return kExitOk;
}

int cmd_split(const CommonArgs& args) {
  const sos::PipelineConfig cfg = resolve_config(args);
  sos::DatasetManifest manifest = sos::load_manifest(args.manifest);
  const auto breakdowns = sos::load_roi_breakdowns(args.rois);

  std::map<std::string, const sos::RoiLossBreakdown*> by_id;
  for (const auto& b : breakdowns) {
    if (manifest.find(b.image_id) == nullptr) {
      sos::fail(sos::ErrorKind::kValidation,
                "rois reference unknown image \"" + b.image_id + "\"");
    }
    by_id[b.image_id] = &b;
  }
  std::vector<sos::SplitLossRecord> records;
  for (const sos::ImageRecord& rec : manifest.images) {
    const auto it = by_id.find(rec.image_id);
    if (it == by_id.end()) {
      sos::fail(sos::ErrorKind::kValidation,
                "no RoI losses for image \"" + rec.image_id + "\"");
    }
    records.push_back(sos::split_loss_image(*it->second));
  }
  sos::apply_partition(manifest, sos::partition_dataset(records, cfg.split_k));
  sos::save_manifest(manifest, args.out);
  return kExitOk;
}

int cmd_ssod_sim(const CommonArgs& args) {
  const sos::PipelineConfig cfg = resolve_config(args);
  const sos::DatasetManifest manifest = sos::load_manifest(args.manifest);
  sos::ToyDetector detector(manifest.num_classes());

  if (!args.params.empty()) {
    std::ifstream in(args.params, std::ios::binary);
    if (!in) sos::fail(sos::ErrorKind::kIo, "cannot open " + args.params);
    std::ostringstream buf;
    buf << in.rdbuf();
    nlohmann::json v = nlohmann::json::parse(buf.str(), nullptr, false);
    if (v.is_discarded() || !v.is_object() || !v.contains("params") ||
        !v["params"].is_array()) {
      sos::fail(sos::ErrorKind::kSchema,
                "params file must be {\"params\": [numbers]}");
    }
    detector.set_parameters(v["params"].get<std::vector<double>>());
  } else {
    // No initial parameters given: fit on the labeled subset first.
    std::vector<const sos::ImageRecord*> labeled;
    for (const sos::ImageRecord& rec : manifest.images) {
      if (rec.split && *rec.split == sos::SplitTag::kLabeled) {
        labeled.push_back(&rec);
      }
    }
    if (labeled.empty()) {
      sos::fail(sos::ErrorKind::kValidation,
                "ssod-sim: no labeled images to initialize from");
    }
    detector.fit_supervised(labeled, cfg.train.retrain_steps,
                            cfg.train.retrain_step_size);
  }

  sos::MutualLearningOptions options;
  options.n_steps = cfg.train.ssod_steps;
  options.step_size = cfg.train.ssod_step_size;
  options.seed = args.seed;
  options.labeled_batch = cfg.train.labeled_batch;
  options.unlabeled_batch = cfg.train.unlabeled_batch;
  const sos::MutualLearningResult result =
      sos::run_mutual_learning(detector, manifest, cfg.ssod, options);
  write_text(args.out, sos::mutual_learning_result_to_json(result));
  return kExitOk;
}

int cmd_eval(const CommonArgs& args) {
  const sos::PipelineConfig cfg = resolve_config(args);
  const sos::DatasetManifest manifest = sos::load_manifest(args.manifest);
  const auto detections = sos::load_detections(args.scores);
  const sos::EvalResult result =
      sos::evaluate(detections, manifest, cfg.eval_thresholds);
  write_text(args.out, sos::eval_result_to_json(result));
  return kExitOk;
}

int cmd_pipeline(const CommonArgs& args) {
  const sos::PipelineConfig cfg = resolve_config(args);
  const sos::PipelineOutcome outcome =
      sos::run_pipeline(cfg, args.seed, args.jobs);
  write_text(args.out, sos::pipeline_outcome_to_json(outcome));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sos - weakly supervised detection pseudo-supervision pipeline"};
  app.set_version_flag("--version", "sos 0.1.0");
  app.require_subcommand(1);

  CommonArgs args;
  std::int64_t synth_images = 200;
  int synth_classes = 5;
  double synth_noise = 0.3;
  std::string out_manifest, out_scores, out_gt;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--seed", args.seed, "Generator seed");
  synth->add_option("--n-images", synth_images, "Number of images");
  synth->add_option("--n-classes", synth_classes, "Number of classes");
  synth->add_option("--noise", synth_noise, "Score corruption in [0,1]");
  synth->add_option("--out-manifest", out_manifest, "Training manifest path")
      ->required();
  synth->add_option("--out-scores", out_scores, "Proposal scores path (JSON lines)")
      ->required();
  synth->add_option("--out-gt", out_gt, "Groundtruth manifest path")->required();

  auto add_common = [&args](CLI::App* cmd, bool with_scores) {
    cmd->add_option("--manifest", args.manifest, "Dataset manifest")->required();
    if (with_scores) {
      cmd->add_option("--scores", args.scores, "Detections JSON-lines input")
          ->required();
    }
    cmd->add_option("--config", args.config, "Pipeline config JSON");
    cmd->add_option("--preset", args.preset,
                    "Config preset: voc2007 | voc2012 | coco | synthetic");
    cmd->add_option("--out", args.out, "Output path")->required();
    cmd->add_option("--jobs", args.jobs, "Worker threads for per-image stages");
  };

  auto* mine = app.add_subcommand("mine", "Mine per-class seed boxes");
  add_common(mine, true);

  auto* pgf = app.add_subcommand("pgf", "Filter detections into pseudo groundtruth");
  add_common(pgf, true);

  auto* split = app.add_subcommand("split", "Split images by foreground loss");
  add_common(split, false);
  split->add_option("--rois", args.rois, "Per-image RoI losses (JSON lines)")
      ->required();
  split->add_option("--k", args.k, "Labeled subset size (overrides config)");

  auto* ssod = app.add_subcommand("ssod-sim", "Run the mutual-learning loop");
  add_common(ssod, false);
  ssod->add_option("--params", args.params, "Initial detector parameters JSON");
  ssod->add_option("--seed", args.seed, "Loop seed");

  auto* eval = app.add_subcommand("eval", "Evaluate detections against groundtruth");
  add_common(eval, true);

  auto* pipeline = app.add_subcommand("pipeline", "Run every stage end to end");
  pipeline->add_option("--config", args.config, "Pipeline config JSON");
  pipeline->add_option("--preset", args.preset, "Config preset");
  pipeline->add_option("--seed", args.seed, "Dataset and loop seed");
  pipeline->add_option("--out", args.out, "Outcome JSON path")->required();
  pipeline->add_option("--jobs", args.jobs, "Worker threads");
  pipeline->add_option("--k", args.k, "Labeled subset size (overrides config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (synth->parsed()) {
      return cmd_synth(args, synth_images, synth_classes, synth_noise,
                       out_manifest, out_scores, out_gt);
    }
    if (mine->parsed()) return cmd_mine(args);
    if (pgf->parsed()) return cmd_pgf(args);
    if (split->parsed()) return cmd_split(args);
    if (ssod->parsed()) return cmd_ssod_sim(args);
    if (eval->parsed()) return cmd_eval(args);
    if (pipeline->parsed()) return cmd_pipeline(args);
  } catch (const sos::Error& e) {
    sos::log_error(e.what());
    return e.kind() == sos::ErrorKind::kIo ? kExitIo : kExitValidation;
  } catch (const std::exception& e) {
    sos::log_error(e.what());
    return kExitValidation;
  }
  return kExitValidation;
}
