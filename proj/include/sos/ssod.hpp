#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "sos/data.hpp"
#include "sos/geom.hpp"
#include "sos/rng.hpp"
#include "sos/split.hpp"

namespace sos {

struct TeacherStudentState {
  std::vector<double> theta_t;
  std::vector<double> theta_s;
  double alpha = 0.9996;
  std::int64_t step = 0;
};

struct SsodConfig {
  double lambda_u = 2.0;              // weight of the unsupervised loss
  double confidence_threshold = 0.7;  // pseudo-label score floor
  double alpha = 0.9996;              // teacher EMA coefficient
  std::int64_t k_labeled = 0;         // labeled-subset size used upstream
};

// theta_t <- alpha * theta_t + (1 - alpha) * theta_s, step incremented,
// student untouched. Element-wise the result stays inside
// [min(theta_t, theta_s), max(theta_t, theta_s)], and alpha = 0 / alpha = 1
// are an exact copy / an exact fixed point.
TeacherStudentState ema_update(const TeacherStudentState& state);

// Keep predictions whose class is active in the image and whose score
// reaches the confidence threshold. Wrong-class predictions are dropped,
// not replaced.
std::vector<ScoredBox> filter_pseudo_labels(
    const std::vector<ScoredBox>& predictions,
    const std::set<int>& active_labels, double confidence_threshold);

// l_sup + lambda_u * l_unsup.
double student_loss(double l_sup, double l_unsup, double lambda_u);

struct LossGrad {
  double value = 0.0;
  std::vector<double> grad;
};

struct PseudoLabeledImage {
  ImageRecord image;
  std::vector<ScoredBox> pseudo_labels;
};

// Minimal detector contract for the mutual-learning loop: deterministic
// prediction given parameters, a supervised loss over images carrying
// pseudo groundtruth, and a classification-only unsupervised loss over
// teacher-labeled images.
class DetectorAdapter {
 public:
  virtual ~DetectorAdapter() = default;

  virtual std::vector<double> parameters() const = 0;
  virtual void set_parameters(const std::vector<double>& params) = 0;
  virtual std::vector<ScoredBox> predict(const ImageRecord& image) const = 0;
  virtual LossGrad supervised_loss(
      const std::vector<const ImageRecord*>& batch) const = 0;
  virtual LossGrad unsupervised_cls_loss(
      const std::vector<PseudoLabeledImage>& batch) const = 0;
};

using AugmentHook = std::function<ImageRecord(const ImageRecord&, Rng&)>;

struct MutualLearningOptions {
  std::int64_t n_steps = 0;
  double step_size = 0.0;
  std::uint64_t seed = 0;
  std::int64_t labeled_batch = 8;
  std::int64_t unlabeled_batch = 8;
  AugmentHook weak_augment;    // identity when unset
  AugmentHook strong_augment;  // identity when unset
};

struct StepLoss {
  double l_sup = 0.0;
  double l_unsup = 0.0;
  double l_stu = 0.0;
};

struct MutualLearningResult {
  std::vector<double> teacher_params;
  std::vector<StepLoss> trace;
};

// One mutual-learning run: per step the teacher labels a weakly augmented
// unlabeled batch, wrong-class and low-confidence labels are dropped, the
// student takes a gradient step on l_sup + lambda_u * l_unsup (the
// unsupervised term is classification-only), and the teacher receives an
// EMA update. The detector must already hold its initial parameters; it is
// left holding the final teacher parameters.
MutualLearningResult run_mutual_learning(DetectorAdapter& detector,
                                         const DatasetManifest& manifest,
                                         const SsodConfig& cfg,
                                         const MutualLearningOptions& options);

MutualLearningResult run_mutual_learning(DetectorAdapter& detector,
                                         const DatasetManifest& manifest,
                                         const SsodConfig& cfg,
                                         std::int64_t n_steps,
                                         double step_size, std::uint64_t seed);

// {"final_teacher_params": [...], "trace": [{"l_stu","l_sup","l_unsup"}...]}
// in byte-stable form.
std::string mutual_learning_result_to_json(const MutualLearningResult& result);

// Linear detector over fixed per-proposal geometric features (normalized
// center, size, their squares, and log aspect). Separate classification
// (n_classes x dim) and regression (4 x dim) parameter blocks; the
// unsupervised loss never produces gradient in the regression block.
class ToyDetector : public DetectorAdapter {
 public:
  static constexpr std::size_t kFeatureDim = 11;

  explicit ToyDetector(int n_classes);

  std::vector<double> parameters() const override { return params_; }
  void set_parameters(const std::vector<double>& params) override;
  std::vector<ScoredBox> predict(const ImageRecord& image) const override;
  LossGrad supervised_loss(
      const std::vector<const ImageRecord*>& batch) const override;
  LossGrad unsupervised_cls_loss(
      const std::vector<PseudoLabeledImage>& batch) const override;

  // Plain full-batch gradient descent on the supervised loss.
  void fit_supervised(const std::vector<const ImageRecord*>& images,
                      std::int64_t n_steps, double step_size);

  // Per-RoI losses against the image's pseudo groundtruth, for the data
  // split. The toy detector has no RPN, so those components are zero.
  RoiLossBreakdown loss_breakdown(const ImageRecord& image) const;

  int n_classes() const { return n_classes_; }
  std::size_t parameter_count() const { return params_.size(); }
  std::size_t regression_block_offset() const {
    return static_cast<std::size_t>(n_classes_) * kFeatureDim;
  }
  std::size_t regression_block_size() const { return 4 * kFeatureDim; }

 private:
  int n_classes_;
  std::vector<double> params_;
};

}  // namespace sos
