#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "sos/geom.hpp"
#include "sos/matrix.hpp"

namespace sos {

using LogitMatrix = Matrix;  // classes x proposals
using ScoreMatrix = Matrix;  // classes x proposals, entries in [0, 1]

// Probability clamp applied inside every log term.
inline constexpr double kProbEps = 1e-6;

// Per-proposal refinement supervision. labels is (C+1) x N one-hot per
// column with row C acting as background; positives lists the foreground
// columns, aligned with regression_targets.
struct RefinementTarget {
  Matrix labels;
  std::vector<double> weights;
  std::vector<std::size_t> positives;
  std::vector<std::array<double, 4>> regression_targets;
};

// Double-softmax proposal scoring: softmax over classes per proposal on xc,
// softmax over proposals per class on xd, then the element-wise product.
ScoreMatrix wsddn_scores(const LogitMatrix& xc, const LogitMatrix& xd);

// Per-class image score: sum of proposal scores along each row.
std::vector<double> image_scores(const ScoreMatrix& xr);

// Binary cross-entropy over per-class image scores, probabilities clamped
// to [kProbEps, 1 - kProbEps].
double mil_loss(const std::vector<double>& phi, const std::vector<int>& y);

struct MilGrad {
  Matrix d_xc;
  Matrix d_xd;
};

// Analytic gradient of mil_loss(image_scores(wsddn_scores(xc, xd)), y)
// with respect to both logit matrices.
MilGrad mil_loss_grad(const LogitMatrix& xc, const LogitMatrix& xd,
                      const std::vector<int>& y);

// Assign each proposal to the seed box with the highest IoU. Proposals at or
// above iou_assign take the seed's class with the seed's score as loss
// weight; the rest become background with weight 1.
RefinementTarget oicr_pseudo_labels(const std::vector<ScoredBox>& seed_boxes,
                                    const std::vector<Box>& proposals,
                                    int n_classes, double iou_assign);

// Weighted refinement cross-entropy over a (C+1) x N probability matrix:
// -(1/N) sum_r sum_c w_r y_{c,r} log x_{c,r}.
double oicr_loss(const Matrix& xk, const RefinementTarget& target);

// Mean smooth-L1 over per-positive 4-vector offsets, scaled by lambda_reg;
// 0 when there are no positives.
double regression_loss(const std::vector<std::array<double, 4>>& pred_offsets,
                       const std::vector<std::array<double, 4>>& target_offsets,
                       double lambda_reg);

// Element-wise mean of equally shaped score matrices.
ScoreMatrix multi_input_average(const std::vector<ScoreMatrix>& score_matrices);

double smooth_l1(double x);

// Standard 4-offset box parameterization (dx/w, dy/h, log(w'/w), log(h'/h)).
std::array<double, 4> box_offsets(const Box& from, const Box& to);
Box apply_box_offsets(const Box& b, const std::array<double, 4>& offsets);

}  // namespace sos
