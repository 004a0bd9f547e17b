#include "sos/pipeline.hpp"

#include <utility>

#include <json.hpp>

#include "json_stable.hpp"
#include "parallel.hpp"
#include "sos/data.hpp"
#include "sos/log.hpp"
#include "sos/mining.hpp"
#include "sos/pgf.hpp"
#include "sos/split.hpp"
#include "sos/ssod.hpp"

namespace sos {

namespace {

std::vector<ImageDetections> predict_all(const ToyDetector& detector,
                                         const DatasetManifest& manifest,
                                         int jobs) {
  std::vector<ImageDetections> detections(manifest.images.size());
  detail::parallel_for(manifest.images.size(), jobs, [&](std::size_t i) {
    detections[i].image_id = manifest.images[i].image_id;
    detections[i].detections = detector.predict(manifest.images[i]);
  });
  return detections;
}

}  // namespace

PipelineOutcome run_pipeline(const PipelineConfig& cfg, std::uint64_t seed,
                             int jobs) {
  SyntheticDataset data = generate_synthetic_dataset(
      seed, cfg.synthetic.n_images, cfg.synthetic.n_classes,
      cfg.synthetic.noise);
  DatasetManifest& train = data.train;
  const int n_classes = train.num_classes();
  log_info("pipeline: generated " + std::to_string(train.images.size()) +
           " synthetic images");

  // Stage 1 surrogate: per-image seed mining from the proposal scores.
  std::vector<ImageDetections> seeds(train.images.size());
  detail::parallel_for(train.images.size(), jobs, [&](std::size_t i) {
    const ImageRecord& rec = train.images[i];
    seeds[i].image_id = rec.image_id;
    seeds[i].detections = mine_seed_boxes(*rec.proposals, data.scores[i],
                                          rec.active_labels, cfg.mining);
  });

  PipelineOutcome outcome;
  outcome.seeds_eval = evaluate(seeds, data.groundtruth, cfg.eval_thresholds);
  outcome.map50_seeds = outcome.seeds_eval.map50;
  log_info("pipeline: seeds map50 = " + std::to_string(outcome.map50_seeds));

  // Stage 2: filter seeds into pseudo groundtruth and retrain.
  detail::parallel_for(train.images.size(), jobs, [&](std::size_t i) {
    ImageRecord& rec = train.images[i];
    rec.pseudo_gt = pgf_filter(seeds[i].detections, rec.active_labels,
                               n_classes, cfg.pgf);
  });

  ToyDetector detector(n_classes);
  std::vector<const ImageRecord*> all_images;
  for (const ImageRecord& rec : train.images) all_images.push_back(&rec);
  detector.fit_supervised(all_images, cfg.train.retrain_steps,
                          cfg.train.retrain_step_size);

  outcome.pgf_retrain_eval = evaluate(predict_all(detector, train, jobs),
                                      data.groundtruth, cfg.eval_thresholds);
  outcome.map50_pgf_retrain = outcome.pgf_retrain_eval.map50;
  log_info("pipeline: pgf retrain map50 = " +
           std::to_string(outcome.map50_pgf_retrain));

  // Stage 3: split by foreground loss, then mutual learning.
  std::vector<SplitLossRecord> records(train.images.size());
  detail::parallel_for(train.images.size(), jobs, [&](std::size_t i) {
    records[i] = split_loss_image(detector.loss_breakdown(train.images[i]));
  });
  apply_partition(train, partition_dataset(records, cfg.split_k));

  MutualLearningOptions options;
  options.n_steps = cfg.train.ssod_steps;
  options.step_size = cfg.train.ssod_step_size;
  options.seed = seed;
  options.labeled_batch = cfg.train.labeled_batch;
  options.unlabeled_batch = cfg.train.unlabeled_batch;
  run_mutual_learning(detector, train, cfg.ssod, options);

  outcome.ssod_eval = evaluate(predict_all(detector, train, jobs),
                               data.groundtruth, cfg.eval_thresholds);
  outcome.map50_ssod = outcome.ssod_eval.map50;
  log_info("pipeline: ssod map50 = " + std::to_string(outcome.map50_ssod));
  return outcome;
}

std::string pipeline_outcome_to_json(const PipelineOutcome& outcome) {
  nlohmann::json root;
  root["map50_seeds"] = outcome.map50_seeds;
  root["map50_pgf_retrain"] = outcome.map50_pgf_retrain;
  root["map50_ssod"] = outcome.map50_ssod;
  root["final"] = nlohmann::json::parse(eval_result_to_json(outcome.ssod_eval));
  return detail::dump_stable(root) + "\n";
}

}  // namespace sos
