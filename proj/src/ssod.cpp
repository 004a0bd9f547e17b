#include "sos/ssod.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>

#include <json.hpp>

#include "json_stable.hpp"
#include "sos/error.hpp"
#include "sos/milhead.hpp"

namespace sos {

TeacherStudentState ema_update(const TeacherStudentState& state) {
  if (state.theta_t.size() != state.theta_s.size()) {
    fail(ErrorKind::kInvalidArgument, "ema_update: length mismatch");
  }
  if (!(state.alpha >= 0.0 && state.alpha <= 1.0)) {
    fail(ErrorKind::kInvalidArgument, "ema_update: alpha must be in [0, 1]");
  }
  TeacherStudentState next = state;
  next.step = state.step + 1;
  if (state.alpha == 0.0) {
    next.theta_t = state.theta_s;  // exact copy
    return next;
  }
  // t + (1-a)*(s-t) keeps each element inside [min(t,s), max(t,s)]
  // in floating point, which the plain two-product form does not.
  const double beta = 1.0 - state.alpha;
  for (std::size_t i = 0; i < next.theta_t.size(); ++i) {
    next.theta_t[i] += beta * (state.theta_s[i] - state.theta_t[i]);
  }
  return next;
}

std::vector<ScoredBox> filter_pseudo_labels(
    const std::vector<ScoredBox>& predictions,
    const std::set<int>& active_labels, double confidence_threshold) {
  std::vector<ScoredBox> kept;
  for (const ScoredBox& p : predictions) {
    if (p.score >= confidence_threshold && active_labels.count(p.class_id) > 0) {
      kept.push_back(p);
    }
  }
  return kept;
}

double student_loss(double l_sup, double l_unsup, double lambda_u) {
  if (l_sup < 0.0 || l_unsup < 0.0 || lambda_u < 0.0) {
    fail(ErrorKind::kInvalidArgument, "student_loss: negative input");
  }
  return l_sup + lambda_u * l_unsup;
}

namespace {

constexpr double kAssignIou = 0.5;      // foreground assignment threshold
constexpr double kPredictNms = 0.5;     // per-class suppression in predict
constexpr double kPredictMinScore = 0.05;
constexpr double kPositiveWeight = 4.0;  // rebalances the rare positives
constexpr double kLambdaReg = 1.0;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::array<double, ToyDetector::kFeatureDim> proposal_features(
    const Box& b, double width, double height) {
  const double cx = (b.x1 + b.x2) / 2 / width;
  const double cy = (b.y1 + b.y2) / 2 / height;
  const double w = b.width() / width;
  const double h = b.height() / height;
  const double aspect =
      std::log(std::max(b.width(), 1e-6) / std::max(b.height(), 1e-6));
  return {1.0, cx, cy, w, h, cx * cx, cy * cy, w * w, h * h, cx * cy, aspect};
}

// Best-IoU pseudo-groundtruth assignment; returns one entry per proposal,
// gts.size() meaning background.
std::vector<std::size_t> assign_to_gt(const std::vector<Box>& proposals,
                                      const std::vector<ScoredBox>& gts) {
  std::vector<std::size_t> assignment(proposals.size(), gts.size());
  for (std::size_t r = 0; r < proposals.size(); ++r) {
    double best = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double overlap = iou(proposals[r], gts[g].box);
      if (overlap > best) {
        best = overlap;
        assignment[r] = g;
      }
    }
    if (best < kAssignIou) assignment[r] = gts.size();
  }
  return assignment;
}

Box clamp_to_image(Box b, double width, double height) {
  b.x1 = std::min(std::max(b.x1, 0.0), width);
  b.y1 = std::min(std::max(b.y1, 0.0), height);
  b.x2 = std::min(std::max(b.x2, b.x1), width);
  b.y2 = std::min(std::max(b.y2, b.y1), height);
  return b;
}

const std::vector<Box>& proposals_of(const ImageRecord& image) {
  if (!image.proposals) {
    fail(ErrorKind::kInvalidArgument,
         "toy detector: image \"" + image.image_id + "\" has no proposals");
  }
  return *image.proposals;
}

}  // namespace

ToyDetector::ToyDetector(int n_classes) : n_classes_(n_classes) {
  if (n_classes < 1) {
    fail(ErrorKind::kInvalidArgument, "ToyDetector: n_classes must be >= 1");
  }
  params_.assign((static_cast<std::size_t>(n_classes) + 4) * kFeatureDim, 0.0);
}

void ToyDetector::set_parameters(const std::vector<double>& params) {
  if (params.size() != params_.size()) {
    fail(ErrorKind::kInvalidArgument, "ToyDetector: parameter length mismatch");
  }
  params_ = params;
}

std::vector<ScoredBox> ToyDetector::predict(const ImageRecord& image) const {
  const std::vector<Box>& proposals = proposals_of(image);
  const std::size_t reg_off = regression_block_offset();

  std::vector<std::vector<ScoredBox>> per_class(
      static_cast<std::size_t>(n_classes_));
  for (const Box& proposal : proposals) {
    const auto f = proposal_features(proposal, image.width, image.height);

    std::array<double, 4> offsets{};
    for (int k = 0; k < 4; ++k) {
      double z = 0.0;
      for (std::size_t d = 0; d < kFeatureDim; ++d) {
        z += params_[reg_off + k * kFeatureDim + d] * f[d];
      }
      offsets[k] = z;
    }
    const Box refined = clamp_to_image(apply_box_offsets(proposal, offsets),
                                       image.width, image.height);

    for (int c = 0; c < n_classes_; ++c) {
      double z = 0.0;
      for (std::size_t d = 0; d < kFeatureDim; ++d) {
        z += params_[static_cast<std::size_t>(c) * kFeatureDim + d] * f[d];
      }
      const double score = sigmoid(z);
      if (score >= kPredictMinScore) {
        per_class[static_cast<std::size_t>(c)].push_back(
            ScoredBox{refined, score, c});
      }
    }
  }

  std::vector<ScoredBox> detections;
  for (auto& candidates : per_class) {
    const std::vector<ScoredBox> kept = nms(candidates, kPredictNms);
    detections.insert(detections.end(), kept.begin(), kept.end());
  }
  return detections;
}

namespace {

// Shared classification/regression loss body. Pseudo labels play the role of
// groundtruth; regression terms are only computed when with_regression.
struct BatchItem {
  const ImageRecord* image;
  const std::vector<ScoredBox>* boxes;
};

LossGrad detector_loss(const std::vector<double>& params, int n_classes,
                       const std::vector<BatchItem>& batch,
                       bool with_regression) {
  constexpr std::size_t dim = ToyDetector::kFeatureDim;
  const std::size_t reg_off = static_cast<std::size_t>(n_classes) * dim;
  LossGrad out;
  out.grad.assign(params.size(), 0.0);
  if (batch.empty()) return out;

  for (const BatchItem& item : batch) {
    const std::vector<Box>& proposals = proposals_of(*item.image);
    if (proposals.empty()) continue;
    const std::vector<ScoredBox>& gts = *item.boxes;
    const auto assignment = assign_to_gt(proposals, gts);

    const double cls_norm =
        1.0 / (static_cast<double>(batch.size()) *
               static_cast<double>(proposals.size()) *
               static_cast<double>(n_classes));

    std::size_t n_pos = 0;
    for (std::size_t r = 0; r < proposals.size(); ++r) {
      if (assignment[r] < gts.size()) ++n_pos;
    }
    const double reg_norm =
        n_pos > 0 ? 1.0 / (static_cast<double>(batch.size()) *
                           static_cast<double>(n_pos))
                  : 0.0;

    for (std::size_t r = 0; r < proposals.size(); ++r) {
      const auto f =
          proposal_features(proposals[r], item.image->width, item.image->height);
      const bool is_fg = assignment[r] < gts.size();
      const int fg_class = is_fg ? gts[assignment[r]].class_id : -1;

      for (int c = 0; c < n_classes; ++c) {
        double z = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
          z += params[static_cast<std::size_t>(c) * dim + d] * f[d];
        }
        const double p = sigmoid(z);
        const double y = c == fg_class ? 1.0 : 0.0;
        const double weight = (y > 0.0 ? kPositiveWeight : 1.0) * cls_norm;
        const double clamped = std::min(std::max(p, 1e-12), 1.0 - 1e-12);
        out.value -=
            weight * (y * std::log(clamped) + (1.0 - y) * std::log(1.0 - clamped));
        const double dz = weight * (p - y);
        for (std::size_t d = 0; d < dim; ++d) {
          out.grad[static_cast<std::size_t>(c) * dim + d] += dz * f[d];
        }
      }

      if (with_regression && is_fg) {
        const auto target = box_offsets(proposals[r], gts[assignment[r]].box);
        for (int k = 0; k < 4; ++k) {
          double z = 0.0;
          for (std::size_t d = 0; d < dim; ++d) {
            z += params[reg_off + k * dim + d] * f[d];
          }
          const double diff = z - target[k];
          out.value += kLambdaReg * reg_norm * smooth_l1(diff);
          const double ddiff =
              kLambdaReg * reg_norm * std::min(std::max(diff, -1.0), 1.0);
          for (std::size_t d = 0; d < dim; ++d) {
            out.grad[reg_off + k * dim + d] += ddiff * f[d];
          }
        }
      }
    }
  }
  return out;
}

}  // namespace

LossGrad ToyDetector::supervised_loss(
    const std::vector<const ImageRecord*>& batch) const {
  std::vector<BatchItem> items;
  items.reserve(batch.size());
  for (const ImageRecord* image : batch) {
    if (!image->pseudo_gt) {
      fail(ErrorKind::kInvalidArgument,
           "supervised_loss: image \"" + image->image_id +
               "\" has no pseudo groundtruth");
    }
    items.push_back(BatchItem{image, &*image->pseudo_gt});
  }
  return detector_loss(params_, n_classes_, items, /*with_regression=*/true);
}

LossGrad ToyDetector::unsupervised_cls_loss(
    const std::vector<PseudoLabeledImage>& batch) const {
  std::vector<BatchItem> items;
  items.reserve(batch.size());
  for (const PseudoLabeledImage& entry : batch) {
    items.push_back(BatchItem{&entry.image, &entry.pseudo_labels});
  }
  return detector_loss(params_, n_classes_, items, /*with_regression=*/false);
}

void ToyDetector::fit_supervised(const std::vector<const ImageRecord*>& images,
                                 std::int64_t n_steps, double step_size) {
  for (std::int64_t step = 0; step < n_steps; ++step) {
    const LossGrad lg = supervised_loss(images);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      params_[i] -= step_size * lg.grad[i];
    }
  }
}

RoiLossBreakdown ToyDetector::loss_breakdown(const ImageRecord& image) const {
  if (!image.pseudo_gt) {
    fail(ErrorKind::kInvalidArgument,
         "loss_breakdown: image \"" + image.image_id +
             "\" has no pseudo groundtruth");
  }
  const std::vector<Box>& proposals = proposals_of(image);
  const std::vector<ScoredBox>& gts = *image.pseudo_gt;
  const auto assignment = assign_to_gt(proposals, gts);
  const std::size_t reg_off = regression_block_offset();

  RoiLossBreakdown breakdown;
  breakdown.image_id = image.image_id;
  for (std::size_t r = 0; r < proposals.size(); ++r) {
    const auto f = proposal_features(proposals[r], image.width, image.height);
    RoiLoss roi;
    roi.is_foreground = assignment[r] < gts.size();
    const int fg_class = roi.is_foreground ? gts[assignment[r]].class_id : -1;

    for (int c = 0; c < n_classes_; ++c) {
      double z = 0.0;
      for (std::size_t d = 0; d < kFeatureDim; ++d) {
        z += params_[static_cast<std::size_t>(c) * kFeatureDim + d] * f[d];
      }
      const double p =
          std::min(std::max(sigmoid(z), 1e-12), 1.0 - 1e-12);
      const double y = c == fg_class ? 1.0 : 0.0;
      roi.roi_cls -= (y * std::log(p) + (1.0 - y) * std::log(1.0 - p)) /
                     static_cast<double>(n_classes_);
    }
    if (roi.is_foreground) {
      const auto target = box_offsets(proposals[r], gts[assignment[r]].box);
      for (int k = 0; k < 4; ++k) {
        double z = 0.0;
        for (std::size_t d = 0; d < kFeatureDim; ++d) {
          z += params_[reg_off + k * kFeatureDim + d] * f[d];
        }
        roi.roi_reg += kLambdaReg * smooth_l1(z - target[k]);
      }
    }
    breakdown.rois.push_back(roi);
  }
  return breakdown;
}

namespace {

// Deterministic sample of `count` distinct indices (partial Fisher-Yates).
std::vector<std::size_t> sample_indices(std::size_t population,
                                        std::int64_t count, Rng& rng) {
  std::vector<std::size_t> pool(population);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  const auto take =
      std::min<std::size_t>(population, static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < take; ++i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(
        static_cast<std::int64_t>(i), static_cast<std::int64_t>(population) - 1));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(take);
  return pool;
}

}  // namespace

MutualLearningResult run_mutual_learning(DetectorAdapter& detector,
                                         const DatasetManifest& manifest,
                                         const SsodConfig& cfg,
                                         const MutualLearningOptions& options) {
  std::vector<const ImageRecord*> labeled;
  std::vector<const ImageRecord*> unlabeled;
  for (const ImageRecord& rec : manifest.images) {
    if (!rec.split) {
      fail(ErrorKind::kValidation,
           "run_mutual_learning: manifest is not partitioned (image \"" +
               rec.image_id + "\" has no split tag)");
    }
    if (*rec.split == SplitTag::kLabeled) {
      labeled.push_back(&rec);
    } else {
      unlabeled.push_back(&rec);
    }
  }
  if (labeled.empty()) {
    fail(ErrorKind::kValidation, "run_mutual_learning: empty labeled set");
  }

  TeacherStudentState state;
  state.theta_t = detector.parameters();
  state.theta_s = state.theta_t;
  state.alpha = cfg.alpha;

  Rng rng(options.seed);
  Rng batch_rng = rng.fork(1);
  Rng augment_rng = rng.fork(2);

  MutualLearningResult result;
  result.trace.reserve(static_cast<std::size_t>(options.n_steps));

  for (std::int64_t step = 0; step < options.n_steps; ++step) {
    const auto labeled_idx =
        sample_indices(labeled.size(), options.labeled_batch, batch_rng);
    const auto unlabeled_idx =
        sample_indices(unlabeled.size(), options.unlabeled_batch, batch_rng);

    std::vector<const ImageRecord*> labeled_batch;
    for (const std::size_t i : labeled_idx) labeled_batch.push_back(labeled[i]);

    // Teacher labels the weakly augmented unlabeled batch.
    detector.set_parameters(state.theta_t);
    std::vector<PseudoLabeledImage> pseudo_batch;
    for (const std::size_t i : unlabeled_idx) {
      const ImageRecord& original = *unlabeled[i];
      ImageRecord weak = options.weak_augment
                             ? options.weak_augment(original, augment_rng)
                             : original;
      const auto predictions = detector.predict(weak);
      PseudoLabeledImage entry;
      entry.image = options.strong_augment
                        ? options.strong_augment(original, augment_rng)
                        : original;
      entry.pseudo_labels = filter_pseudo_labels(
          predictions, original.active_labels, cfg.confidence_threshold);
      pseudo_batch.push_back(std::move(entry));
    }

    // Student step on the combined loss.
    detector.set_parameters(state.theta_s);
    const LossGrad sup = detector.supervised_loss(labeled_batch);
    LossGrad unsup;
    unsup.grad.assign(state.theta_s.size(), 0.0);
    if (!pseudo_batch.empty()) {
      unsup = detector.unsupervised_cls_loss(pseudo_batch);
    }
    const double l_stu = student_loss(sup.value, unsup.value, cfg.lambda_u);
    for (std::size_t i = 0; i < state.theta_s.size(); ++i) {
      state.theta_s[i] -=
          options.step_size * (sup.grad[i] + cfg.lambda_u * unsup.grad[i]);
    }
    state = ema_update(state);
    result.trace.push_back(StepLoss{sup.value, unsup.value, l_stu});
  }

  detector.set_parameters(state.theta_t);
  result.teacher_params = std::move(state.theta_t);
  return result;
}

MutualLearningResult run_mutual_learning(DetectorAdapter& detector,
                                         const DatasetManifest& manifest,
                                         const SsodConfig& cfg,
                                         std::int64_t n_steps,
                                         double step_size, std::uint64_t seed) {
  MutualLearningOptions options;
  options.n_steps = n_steps;
  options.step_size = step_size;
  options.seed = seed;
  return run_mutual_learning(detector, manifest, cfg, options);
}

std::string mutual_learning_result_to_json(const MutualLearningResult& result) {
  nlohmann::json root;
  root["final_teacher_params"] = result.teacher_params;
  nlohmann::json trace = nlohmann::json::array();
  for (const StepLoss& step : result.trace) {
    nlohmann::json s;
    s["l_sup"] = step.l_sup;
    s["l_unsup"] = step.l_unsup;
    s["l_stu"] = step.l_stu;
    trace.push_back(std::move(s));
  }
  root["trace"] = std::move(trace);
  return detail::dump_stable(root) + "\n";
}

}  // namespace sos
