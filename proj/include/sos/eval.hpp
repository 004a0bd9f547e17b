#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sos/data.hpp"
#include "sos/geom.hpp"

namespace sos {

struct MatchResult {
  std::size_t det_index = 0;
  bool is_tp = false;
};

// Greedy matching for one class on one image: detections in descending score
// order (index tie-break) claim their best-IoU unmatched ground-truth box
// when that IoU reaches the threshold. Output is in processing order.
std::vector<MatchResult> match_detections(const std::vector<ScoredBox>& dets,
                                          const std::vector<ScoredBox>& gts,
                                          double iou_threshold);

// All-points interpolated average precision for a ranked TP/FP sequence;
// 0 when there is no ground truth.
double average_precision(const std::vector<MatchResult>& matches,
                         std::int64_t n_gt);

struct ClassThresholdCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
};

struct EvalResult {
  std::vector<double> thresholds;
  std::vector<int> class_ids;  // classes with ground truth, ascending
  std::vector<std::vector<double>> ap;                  // [class][threshold]
  std::vector<std::vector<ClassThresholdCounts>> counts;  // [class][threshold]
  std::vector<double> map_per_threshold;
  double map50 = 0.0;
  double map75 = 0.0;
  double map5095 = 0.0;  // mean over all evaluated thresholds
};

// Ground truth comes from each manifest image's pseudo_gt field. Classes
// with no ground truth anywhere are excluded from every mean. Detections
// must reference manifest images.
EvalResult evaluate(const std::vector<ImageDetections>& detections,
                    const DatasetManifest& groundtruth,
                    const std::vector<double>& thresholds);

// {0.50, 0.55, ..., 0.95}
const std::vector<double>& default_eval_thresholds();

std::string eval_result_to_json(const EvalResult& result);

}  // namespace sos
