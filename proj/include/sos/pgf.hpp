#pragma once

#include <set>
#include <vector>

#include "sos/geom.hpp"

namespace sos {

struct PgfConfig {
  double t_keep = 0.2;  // keep detections scoring at least this
  double t_top = 0.0;   // skip a class whose best score is below this
  double t_con = 0.85;  // drop a box covered by another beyond this ratio
};

// Pseudo-groundtruth filtering. Per active class: skip the class when its
// best detection scores below t_top; otherwise keep the best detection plus
// everything scoring at least t_keep, then walk the survivors in descending
// score order and let each survivor remove the remaining boxes it covers
// with containment_ratio > t_con. Classes outside active_labels contribute
// nothing; boxes are never synthesized or adjusted.
std::vector<ScoredBox> pgf_filter(const std::vector<ScoredBox>& detections,
                                  const std::set<int>& active_labels,
                                  int n_classes, const PgfConfig& cfg);

}  // namespace sos
