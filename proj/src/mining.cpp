#include "sos/mining.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>

#include "sos/error.hpp"

namespace sos {

std::vector<ScoredBox> mine_seed_boxes(const std::vector<Box>& proposals,
                                       const ScoreMatrix& scores,
                                       const std::set<int>& active_labels,
                                       const MiningConfig& cfg) {
  if (proposals.empty()) {
    fail(ErrorKind::kInvalidArgument, "mine_seed_boxes: empty proposals");
  }
  if (scores.rows() == 0 || scores.cols() != proposals.size()) {
    fail(ErrorKind::kInvalidArgument,
         "mine_seed_boxes: score matrix does not match proposals");
  }
  if (active_labels.empty()) {
    fail(ErrorKind::kInvalidArgument, "mine_seed_boxes: no active labels");
  }
  if (!(cfg.p > 0.0 && cfg.p <= 1.0)) {
    fail(ErrorKind::kInvalidArgument, "mine_seed_boxes: p must be in (0, 1]");
  }
  if (!(cfg.s_t >= 0.0 && cfg.s_t <= 1.0)) {
    fail(ErrorKind::kInvalidArgument, "mine_seed_boxes: s_t must be in [0, 1]");
  }

  const std::size_t n = proposals.size();
  const double raw_count = static_cast<double>(n) * cfg.p;
  const auto rounded = cfg.round_down ? std::floor(raw_count) : std::ceil(raw_count);
  const std::size_t top_count =
      std::min(n, std::max<std::size_t>(1, static_cast<std::size_t>(rounded)));

  std::vector<ScoredBox> seeds;
  std::vector<std::size_t> order(n);
  for (const int cls : active_labels) {
    if (cls < 0 || static_cast<std::size_t>(cls) >= scores.rows()) {
      fail(ErrorKind::kInvalidArgument, "mine_seed_boxes: label out of range");
    }
    const auto row = static_cast<std::size_t>(cls);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (scores(row, a) != scores(row, b)) {
        return scores(row, a) > scores(row, b);
      }
      return a < b;
    });

    std::vector<ScoredBox> candidates;
    for (std::size_t k = 0; k < top_count; ++k) {
      const std::size_t idx = order[k];
      if (scores(row, idx) < cfg.s_t) continue;  // low-score removal
      candidates.push_back(ScoredBox{proposals[idx], scores(row, idx), cls});
    }
    const std::vector<ScoredBox> kept = nms(candidates, cfg.nms_threshold);
    seeds.insert(seeds.end(), kept.begin(), kept.end());
  }
  return seeds;
}

}  // namespace sos
