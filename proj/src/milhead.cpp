#include "sos/milhead.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sos/error.hpp"

namespace sos {

namespace {

void check_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (!a.same_shape(b)) {
    fail(ErrorKind::kInvalidArgument, std::string(what) + ": shape mismatch");
  }
}

void check_nonempty(const Matrix& m, const char* what) {
  if (m.rows() == 0 || m.cols() == 0) {
    fail(ErrorKind::kInvalidArgument, std::string(what) + ": empty matrix");
  }
}

double clamp_prob(double p) {
  return std::min(std::max(p, kProbEps), 1.0 - kProbEps);
}

// Max-subtracted softmax over classes, one column at a time.
Matrix softmax_over_classes(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t j = 0; j < x.cols(); ++j) {
    double hi = x(0, j);
    for (std::size_t i = 1; i < x.rows(); ++i) hi = std::max(hi, x(i, j));
    double total = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      out(i, j) = std::exp(x(i, j) - hi);
      total += out(i, j);
    }
    for (std::size_t i = 0; i < x.rows(); ++i) out(i, j) /= total;
  }
  return out;
}

// Max-subtracted softmax over proposals, one row at a time.
Matrix softmax_over_proposals(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double hi = x(i, 0);
    for (std::size_t j = 1; j < x.cols(); ++j) hi = std::max(hi, x(i, j));
    double total = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) {
      out(i, j) = std::exp(x(i, j) - hi);
      total += out(i, j);
    }
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) /= total;
  }
  return out;
}

}  // namespace

ScoreMatrix wsddn_scores(const LogitMatrix& xc, const LogitMatrix& xd) {
  check_same_shape(xc, xd, "wsddn_scores");
  check_nonempty(xc, "wsddn_scores");
  const Matrix a = softmax_over_classes(xc);
  const Matrix b = softmax_over_proposals(xd);
  Matrix out(xc.rows(), xc.cols());
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < out.cols(); ++j) {
      out(i, j) = a(i, j) * b(i, j);
    }
  }
  return out;
}

std::vector<double> image_scores(const ScoreMatrix& xr) {
  std::vector<double> phi(xr.rows(), 0.0);
  for (std::size_t i = 0; i < xr.rows(); ++i) {
    for (std::size_t j = 0; j < xr.cols(); ++j) phi[i] += xr(i, j);
  }
  return phi;
}

double mil_loss(const std::vector<double>& phi, const std::vector<int>& y) {
  if (phi.size() != y.size()) {
    fail(ErrorKind::kInvalidArgument, "mil_loss: length mismatch");
  }
  double loss = 0.0;
  for (std::size_t c = 0; c < phi.size(); ++c) {
    const double p = clamp_prob(phi[c]);
    loss -= y[c] != 0 ? std::log(p) : std::log(1.0 - p);
  }
  return loss;
}

MilGrad mil_loss_grad(const LogitMatrix& xc, const LogitMatrix& xd,
                      const std::vector<int>& y) {
  check_same_shape(xc, xd, "mil_loss_grad");
  check_nonempty(xc, "mil_loss_grad");
  if (y.size() != xc.rows()) {
    fail(ErrorKind::kInvalidArgument, "mil_loss_grad: label length mismatch");
  }

  const std::size_t n_classes = xc.rows();
  const std::size_t n_props = xc.cols();
  const Matrix a = softmax_over_classes(xc);
  const Matrix b = softmax_over_proposals(xd);

  // dL/dphi, zeroed where the clamp is active.
  std::vector<double> g(n_classes, 0.0);
  for (std::size_t c = 0; c < n_classes; ++c) {
    double phi = 0.0;
    for (std::size_t j = 0; j < n_props; ++j) phi += a(c, j) * b(c, j);
    if (phi <= kProbEps || phi >= 1.0 - kProbEps) continue;
    g[c] = y[c] != 0 ? -1.0 / phi : 1.0 / (1.0 - phi);
  }

  MilGrad grad{Matrix(n_classes, n_props), Matrix(n_classes, n_props)};

  // Column softmax backward: dL/dA_{ij} = g_i * B_{ij}.
  for (std::size_t j = 0; j < n_props; ++j) {
    double inner = 0.0;
    for (std::size_t k = 0; k < n_classes; ++k) {
      inner += g[k] * b(k, j) * a(k, j);
    }
    for (std::size_t i = 0; i < n_classes; ++i) {
      grad.d_xc(i, j) = a(i, j) * (g[i] * b(i, j) - inner);
    }
  }

  // Row softmax backward: dL/dB_{ij} = g_i * A_{ij}.
  for (std::size_t i = 0; i < n_classes; ++i) {
    double inner = 0.0;
    for (std::size_t k = 0; k < n_props; ++k) {
      inner += a(i, k) * b(i, k);
    }
    for (std::size_t j = 0; j < n_props; ++j) {
      grad.d_xd(i, j) = b(i, j) * g[i] * (a(i, j) - inner);
    }
  }
  return grad;
}

RefinementTarget oicr_pseudo_labels(const std::vector<ScoredBox>& seed_boxes,
                                    const std::vector<Box>& proposals,
                                    int n_classes, double iou_assign) {
  if (proposals.empty()) {
    fail(ErrorKind::kInvalidArgument, "oicr_pseudo_labels: empty proposals");
  }
  if (!(iou_assign > 0.0 && iou_assign < 1.0)) {
    fail(ErrorKind::kInvalidArgument,
         "oicr_pseudo_labels: iou_assign must be in (0, 1)");
  }
  for (const ScoredBox& seed : seed_boxes) {
    if (seed.class_id < 0 || seed.class_id >= n_classes) {
      fail(ErrorKind::kInvalidArgument,
           "oicr_pseudo_labels: seed class out of range");
    }
  }

  const std::size_t background = static_cast<std::size_t>(n_classes);
  RefinementTarget target;
  target.labels = Matrix(background + 1, proposals.size(), 0.0);
  target.weights.assign(proposals.size(), 1.0);

  for (std::size_t r = 0; r < proposals.size(); ++r) {
    double best_iou = 0.0;
    std::size_t best_seed = seed_boxes.size();
    for (std::size_t s = 0; s < seed_boxes.size(); ++s) {
      const double overlap = iou(proposals[r], seed_boxes[s].box);
      if (overlap > best_iou) {
        best_iou = overlap;
        best_seed = s;
      }
    }
    if (best_seed < seed_boxes.size() && best_iou >= iou_assign) {
      const ScoredBox& seed = seed_boxes[best_seed];
      target.labels(static_cast<std::size_t>(seed.class_id), r) = 1.0;
      target.weights[r] = seed.score;
      target.positives.push_back(r);
      target.regression_targets.push_back(box_offsets(proposals[r], seed.box));
    } else {
      target.labels(background, r) = 1.0;
    }
  }
  return target;
}

double oicr_loss(const Matrix& xk, const RefinementTarget& target) {
  if (!xk.same_shape(target.labels)) {
    fail(ErrorKind::kInvalidArgument, "oicr_loss: shape mismatch");
  }
  check_nonempty(xk, "oicr_loss");
  double loss = 0.0;
  for (std::size_t r = 0; r < xk.cols(); ++r) {
    for (std::size_t c = 0; c < xk.rows(); ++c) {
      if (target.labels(c, r) == 0.0) continue;
      loss -= target.weights[r] * target.labels(c, r) *
              std::log(clamp_prob(xk(c, r)));
    }
  }
  return loss / static_cast<double>(xk.cols());
}

double regression_loss(const std::vector<std::array<double, 4>>& pred_offsets,
                       const std::vector<std::array<double, 4>>& target_offsets,
                       double lambda_reg) {
  if (pred_offsets.size() != target_offsets.size()) {
    fail(ErrorKind::kInvalidArgument, "regression_loss: length mismatch");
  }
  if (pred_offsets.empty()) return 0.0;
  double loss = 0.0;
  for (std::size_t r = 0; r < pred_offsets.size(); ++r) {
    for (int k = 0; k < 4; ++k) {
      loss += lambda_reg * smooth_l1(pred_offsets[r][k] - target_offsets[r][k]);
    }
  }
  return loss / static_cast<double>(pred_offsets.size());
}

ScoreMatrix multi_input_average(const std::vector<ScoreMatrix>& score_matrices) {
  if (score_matrices.empty()) {
    fail(ErrorKind::kInvalidArgument, "multi_input_average: empty list");
  }
  Matrix out = score_matrices.front();
  for (std::size_t m = 1; m < score_matrices.size(); ++m) {
    check_same_shape(out, score_matrices[m], "multi_input_average");
    for (std::size_t k = 0; k < out.data().size(); ++k) {
      out.data()[k] += score_matrices[m].data()[k];
    }
  }
  const double inv = 1.0 / static_cast<double>(score_matrices.size());
  for (double& v : out.data()) v *= inv;
  return out;
}

double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

std::array<double, 4> box_offsets(const Box& from, const Box& to) {
  const double fw = from.width();
  const double fh = from.height();
  const double fcx = (from.x1 + from.x2) / 2;
  const double fcy = (from.y1 + from.y2) / 2;
  const double tcx = (to.x1 + to.x2) / 2;
  const double tcy = (to.y1 + to.y2) / 2;
  return {(tcx - fcx) / fw, (tcy - fcy) / fh, std::log(to.width() / fw),
          std::log(to.height() / fh)};
}

Box apply_box_offsets(const Box& b, const std::array<double, 4>& offsets) {
  const double w = b.width();
  const double h = b.height();
  const double cx = (b.x1 + b.x2) / 2 + offsets[0] * w;
  const double cy = (b.y1 + b.y2) / 2 + offsets[1] * h;
  const double nw = w * std::exp(offsets[2]);
  const double nh = h * std::exp(offsets[3]);
  return Box{cx - nw / 2, cy - nh / 2, cx + nw / 2, cy + nh / 2};
}

}  // namespace sos
