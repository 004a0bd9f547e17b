#pragma once

#include <set>
#include <vector>

#include "sos/geom.hpp"
#include "sos/matrix.hpp"

namespace sos {

struct MiningConfig {
  double p = 0.1;              // top fraction of proposals kept per class
  double s_t = 0.05;           // minimum score after the top-percent cut
  double nms_threshold = 0.01;
  bool round_down = false;     // count = floor(n*p) instead of ceil(n*p)
};

// Per-class seed mining: sort proposals by class score (stable, index
// tie-break), take the top n*p (never fewer than one candidate), drop
// scores below s_t, then suppress with nms. Results are unioned over the
// active classes in ascending class order, so one proposal may seed several
// classes but appears at most once per class.
std::vector<ScoredBox> mine_seed_boxes(const std::vector<Box>& proposals,
                                       const ScoreMatrix& scores,
                                       const std::set<int>& active_labels,
                                       const MiningConfig& cfg);

}  // namespace sos
