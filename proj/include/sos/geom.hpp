#pragma once

#include <vector>

namespace sos {

// Axis-aligned box with continuous half-open coordinates:
// area = (x2 - x1) * (y2 - y1). Zero-area boxes are valid and arise from
// clamping; negative extents are not.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
};

struct ScoredBox {
  Box box;
  double score = 0.0;
  int class_id = 0;
};

bool is_valid_box(const Box& b);

// Area of the geometric intersection, 0 when disjoint.
double intersection_area(const Box& a, const Box& b);

// Intersection over union in [0, 1]; defined 0 when both areas are 0.
double iou(const Box& a, const Box& b);

// |u ∩ v| / |v| in [0, 1]; defined 0 when |v| = 0.
double containment_ratio(const Box& u, const Box& v);

// Greedy score-descending suppression: a box is dropped when its IoU with an
// already kept box exceeds iou_threshold, so the kept set has pairwise
// IoU <= iou_threshold. Equal scores keep input order (lower original index
// first); output is sorted by descending score.
std::vector<ScoredBox> nms(const std::vector<ScoredBox>& boxes,
                           double iou_threshold);

}  // namespace sos
