#include "sos/geom.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>

namespace sos {

bool is_valid_box(const Box& b) {
  return std::isfinite(b.x1) && std::isfinite(b.y1) && std::isfinite(b.x2) &&
         std::isfinite(b.y2) && b.x1 <= b.x2 && b.y1 <= b.y2;
}

double intersection_area(const Box& a, const Box& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  if (w <= 0.0) return 0.0;
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (h <= 0.0) return 0.0;
  return w * h;
}

double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double containment_ratio(const Box& u, const Box& v) {
  const double denom = v.area();
  return denom > 0.0 ? intersection_area(u, v) / denom : 0.0;
}

std::vector<ScoredBox> nms(const std::vector<ScoredBox>& boxes,
                           double iou_threshold) {
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (boxes[a].score != boxes[b].score) {
      return boxes[a].score > boxes[b].score;
    }
    return a < b;  // deterministic tie-break by original index
  });

  std::vector<ScoredBox> kept;
  for (const std::size_t idx : order) {
    bool suppressed = false;
    for (const ScoredBox& k : kept) {
      if (iou(boxes[idx].box, k.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(boxes[idx]);
  }
  return kept;
}

}  // namespace sos
