#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sos/mining.hpp"
#include "sos/pgf.hpp"
#include "sos/ssod.hpp"

namespace sos {

// Knobs of the synthetic desk-scale benchmark.
struct SyntheticConfig {
  std::int64_t n_images = 200;
  int n_classes = 5;
  double noise = 0.3;
};

// Gradient-descent schedules for the toy detector.
struct TrainConfig {
  std::int64_t retrain_steps = 200;
  double retrain_step_size = 4.0;
  std::int64_t ssod_steps = 300;
  double ssod_step_size = 2.0;
  std::int64_t labeled_batch = 8;
  std::int64_t unlabeled_batch = 8;
};

struct PipelineConfig {
  std::string preset = "synthetic";
  MiningConfig mining;
  PgfConfig pgf;
  SsodConfig ssod;
  std::int64_t split_k = 100;
  std::vector<double> eval_thresholds;
  SyntheticConfig synthetic;
  TrainConfig train;
};

// Shipped defaults per dataset: voc2007, voc2012, coco, synthetic.
PipelineConfig preset_config(const std::string& name);

// Start from the file's preset (or `fallback_preset` when the file names
// none) and overlay every field present in the file. Overlaying the same
// file twice gives the same result as once.
PipelineConfig load_pipeline_config(const std::string& path,
                                    const std::string& fallback_preset = "");
PipelineConfig parse_pipeline_config(const std::string& json_text,
                                     const std::string& fallback_preset = "");

// Overlay the fields present in json_text onto base (the "preset" key is
// ignored here). Idempotent: applying the same overrides twice equals once.
PipelineConfig apply_config_overrides(PipelineConfig base,
                                      const std::string& json_text);

}  // namespace sos
