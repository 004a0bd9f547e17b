#pragma once

#include <cstdint>
#include <string>

#include "sos/config.hpp"
#include "sos/eval.hpp"

namespace sos {

// Everything the end-to-end synthetic run produces: the evaluation of the
// raw mined seeds, of the detector retrained on filtered pseudo boxes, and
// of the final mutual-learning teacher.
struct PipelineOutcome {
  EvalResult seeds_eval;
  EvalResult pgf_retrain_eval;
  EvalResult ssod_eval;
  double map50_seeds = 0.0;
  double map50_pgf_retrain = 0.0;
  double map50_ssod = 0.0;
};

// Chain all stages on a generated dataset: mine seeds per image, filter them
// into pseudo groundtruth, retrain the toy detector on the pseudo boxes,
// split images by foreground loss, run mutual learning, and evaluate after
// each stage against the held-back true boxes. Deterministic in (cfg, seed).
PipelineOutcome run_pipeline(const PipelineConfig& cfg, std::uint64_t seed,
                             int jobs = 1);

std::string pipeline_outcome_to_json(const PipelineOutcome& outcome);

}  // namespace sos
