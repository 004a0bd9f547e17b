#include "sos/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <set>

#include <json.hpp>

#include "json_stable.hpp"
#include "sos/error.hpp"

namespace sos {

using nlohmann::json;

std::vector<MatchResult> match_detections(const std::vector<ScoredBox>& dets,
                                          const std::vector<ScoredBox>& gts,
                                          double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    fail(ErrorKind::kInvalidArgument,
         "match_detections: threshold must be in (0, 1]");
  }
  int cls = -1;
  for (const ScoredBox& d : dets) {
    if (cls == -1) cls = d.class_id;
    if (d.class_id != cls) {
      fail(ErrorKind::kInvalidArgument, "match_detections: mixed classes");
    }
  }
  for (const ScoredBox& g : gts) {
    if (cls == -1) cls = g.class_id;
    if (g.class_id != cls) {
      fail(ErrorKind::kInvalidArgument, "match_detections: mixed classes");
    }
  }

  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    return a < b;
  });

  std::vector<bool> consumed(gts.size(), false);
  std::vector<MatchResult> results;
  results.reserve(dets.size());
  for (const std::size_t idx : order) {
    double best_iou = 0.0;
    std::size_t best_gt = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (consumed[g]) continue;
      const double overlap = iou(dets[idx].box, gts[g].box);
      if (overlap > best_iou) {
        best_iou = overlap;
        best_gt = g;
      }
    }
    MatchResult m;
    m.det_index = idx;
    m.is_tp = best_gt < gts.size() && best_iou >= iou_threshold;
    if (m.is_tp) consumed[best_gt] = true;
    results.push_back(m);
  }
  return results;
}

double average_precision(const std::vector<MatchResult>& matches,
                         std::int64_t n_gt) {
  if (n_gt < 0) fail(ErrorKind::kInvalidArgument, "average_precision: n_gt < 0");
  if (n_gt == 0) return 0.0;

  // Precision at each rank, then the running-max envelope from the right.
  std::vector<double> precision;
  std::vector<bool> tp_at;
  precision.reserve(matches.size());
  std::int64_t tp = 0;
  for (std::size_t i = 0; i < matches.size(); ++i) {
    if (matches[i].is_tp) ++tp;
    precision.push_back(static_cast<double>(tp) /
                        static_cast<double>(i + 1));
    tp_at.push_back(matches[i].is_tp);
  }
  for (std::size_t i = precision.size(); i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }

  double ap = 0.0;
  const double recall_step = 1.0 / static_cast<double>(n_gt);
  for (std::size_t i = 0; i < precision.size(); ++i) {
    if (tp_at[i]) ap += recall_step * precision[i];
  }
  return ap;
}

const std::vector<double>& default_eval_thresholds() {
  static const std::vector<double> thresholds = {
      0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95};
  return thresholds;
}

namespace {

struct RankedDet {
  double score = 0.0;
  std::size_t image_index = 0;
  std::size_t det_index = 0;
  bool is_tp = false;
};

double map_at(const EvalResult& result, double threshold) {
  for (std::size_t t = 0; t < result.thresholds.size(); ++t) {
    if (std::abs(result.thresholds[t] - threshold) < 1e-9) {
      return result.map_per_threshold[t];
    }
  }
  return 0.0;
}

}  // namespace

EvalResult evaluate(const std::vector<ImageDetections>& detections,
                    const DatasetManifest& groundtruth,
                    const std::vector<double>& thresholds) {
  if (thresholds.empty()) {
    fail(ErrorKind::kInvalidArgument, "evaluate: no thresholds");
  }
  for (const double t : thresholds) {
    if (!(t > 0.0 && t <= 1.0)) {
      fail(ErrorKind::kInvalidArgument, "evaluate: threshold outside (0, 1]");
    }
  }

  std::map<std::string, std::size_t> image_index;
  for (std::size_t i = 0; i < groundtruth.images.size(); ++i) {
    image_index.emplace(groundtruth.images[i].image_id, i);
  }
  // Detections aligned to manifest order; unknown ids are an error.
  std::vector<const ImageDetections*> per_image(groundtruth.images.size(),
                                                nullptr);
  for (const ImageDetections& d : detections) {
    const auto it = image_index.find(d.image_id);
    if (it == image_index.end()) {
      fail(ErrorKind::kValidation,
           "evaluate: unknown image_id \"" + d.image_id + "\"");
    }
    per_image[it->second] = &d;
  }

  // Classes that actually have ground truth.
  std::set<int> classes_with_gt;
  for (const ImageRecord& rec : groundtruth.images) {
    if (!rec.pseudo_gt) continue;
    for (const ScoredBox& gt : *rec.pseudo_gt) classes_with_gt.insert(gt.class_id);
  }

  EvalResult result;
  result.thresholds = thresholds;
  result.class_ids.assign(classes_with_gt.begin(), classes_with_gt.end());
  result.ap.assign(result.class_ids.size(),
                   std::vector<double>(thresholds.size(), 0.0));
  result.counts.assign(
      result.class_ids.size(),
      std::vector<ClassThresholdCounts>(thresholds.size()));

  for (std::size_t ci = 0; ci < result.class_ids.size(); ++ci) {
    const int cls = result.class_ids[ci];

    std::int64_t n_gt = 0;
    for (const ImageRecord& rec : groundtruth.images) {
      if (!rec.pseudo_gt) continue;
      for (const ScoredBox& gt : *rec.pseudo_gt) {
        if (gt.class_id == cls) ++n_gt;
      }
    }

    for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
      // Match per image, then pool the ranked TP/FP sequence dataset-wide.
      std::vector<RankedDet> pooled;
      for (std::size_t i = 0; i < groundtruth.images.size(); ++i) {
        std::vector<ScoredBox> img_dets;
        std::vector<std::size_t> det_ids;
        if (per_image[i] != nullptr) {
          for (std::size_t d = 0; d < per_image[i]->detections.size(); ++d) {
            if (per_image[i]->detections[d].class_id == cls) {
              img_dets.push_back(per_image[i]->detections[d]);
              det_ids.push_back(d);
            }
          }
        }
        std::vector<ScoredBox> img_gts;
        if (groundtruth.images[i].pseudo_gt) {
          for (const ScoredBox& gt : *groundtruth.images[i].pseudo_gt) {
            if (gt.class_id == cls) img_gts.push_back(gt);
          }
        }
        if (img_dets.empty()) continue;
        const auto matches = match_detections(img_dets, img_gts, thresholds[ti]);
        for (const MatchResult& m : matches) {
          RankedDet r;
          r.score = img_dets[m.det_index].score;
          r.image_index = i;
          r.det_index = det_ids[m.det_index];
          r.is_tp = m.is_tp;
          pooled.push_back(r);
        }
      }
      std::sort(pooled.begin(), pooled.end(),
                [](const RankedDet& a, const RankedDet& b) {
                  if (a.score != b.score) return a.score > b.score;
                  if (a.image_index != b.image_index) {
                    return a.image_index < b.image_index;
                  }
                  return a.det_index < b.det_index;
                });

      std::vector<MatchResult> ranked;
      ranked.reserve(pooled.size());
      ClassThresholdCounts counts;
      for (std::size_t r = 0; r < pooled.size(); ++r) {
        ranked.push_back(MatchResult{r, pooled[r].is_tp});
        if (pooled[r].is_tp) {
          ++counts.tp;
        } else {
          ++counts.fp;
        }
      }
      counts.fn = n_gt - counts.tp;
      result.ap[ci][ti] = average_precision(ranked, n_gt);
      result.counts[ci][ti] = counts;
    }
  }

  result.map_per_threshold.assign(thresholds.size(), 0.0);
  if (!result.class_ids.empty()) {
    for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
      double total = 0.0;
      for (std::size_t ci = 0; ci < result.class_ids.size(); ++ci) {
        total += result.ap[ci][ti];
      }
      result.map_per_threshold[ti] =
          total / static_cast<double>(result.class_ids.size());
    }
  }
  result.map50 = map_at(result, 0.50);
  result.map75 = map_at(result, 0.75);
  result.map5095 =
      std::accumulate(result.map_per_threshold.begin(),
                      result.map_per_threshold.end(), 0.0) /
      static_cast<double>(result.map_per_threshold.size());
  return result;
}

std::string eval_result_to_json(const EvalResult& result) {
  json root;
  root["thresholds"] = result.thresholds;
  root["class_ids"] = result.class_ids;
  root["map50"] = result.map50;
  root["map75"] = result.map75;
  root["map5095"] = result.map5095;
  root["map_per_threshold"] = result.map_per_threshold;
  json per_class = json::array();
  for (std::size_t ci = 0; ci < result.class_ids.size(); ++ci) {
    json c;
    c["class_id"] = result.class_ids[ci];
    c["ap"] = result.ap[ci];
    json counts = json::array();
    for (const ClassThresholdCounts& count : result.counts[ci]) {
      json k;
      k["tp"] = count.tp;
      k["fp"] = count.fp;
      k["fn"] = count.fn;
      counts.push_back(std::move(k));
    }
    c["counts"] = std::move(counts);
    per_class.push_back(std::move(c));
  }
  root["per_class"] = std::move(per_class);
  return detail::dump_stable(root) + "\n";
}

}  // namespace sos
