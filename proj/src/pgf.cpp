#include "sos/pgf.hpp"

#include <algorithm>
#include <cstddef>

#include "sos/error.hpp"

namespace sos {

std::vector<ScoredBox> pgf_filter(const std::vector<ScoredBox>& detections,
                                  const std::set<int>& active_labels,
                                  int n_classes, const PgfConfig& cfg) {
  for (const int cls : active_labels) {
    if (cls < 0 || cls >= n_classes) {
      fail(ErrorKind::kInvalidArgument, "pgf_filter: label out of range");
    }
  }
  for (const ScoredBox& det : detections) {
    if (det.class_id < 0 || det.class_id >= n_classes) {
      fail(ErrorKind::kInvalidArgument, "pgf_filter: detection class out of range");
    }
  }

  std::vector<ScoredBox> result;
  for (const int cls : active_labels) {
    // Indices of this class's detections, in input order.
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < detections.size(); ++i) {
      if (detections[i].class_id == cls) members.push_back(i);
    }
    if (members.empty()) continue;

    std::size_t top = members.front();
    for (const std::size_t i : members) {
      if (detections[i].score > detections[top].score) top = i;
    }
    if (detections[top].score < cfg.t_top) continue;  // unconfident class

    // Score filter; the top detection is always unioned back in.
    std::vector<std::size_t> kept;
    for (const std::size_t i : members) {
      if (detections[i].score >= cfg.t_keep || i == top) kept.push_back(i);
    }

    std::sort(kept.begin(), kept.end(), [&](std::size_t a, std::size_t b) {
      if (detections[a].score != detections[b].score) {
        return detections[a].score > detections[b].score;
      }
      return a < b;
    });

    // Containment pass: each survivor, highest score first, removes the
    // remaining boxes it mostly covers.
    std::vector<bool> removed(kept.size(), false);
    for (std::size_t a = 0; a < kept.size(); ++a) {
      if (removed[a]) continue;
      for (std::size_t b = 0; b < kept.size(); ++b) {
        if (a == b || removed[b]) continue;
        if (containment_ratio(detections[kept[a]].box,
                              detections[kept[b]].box) > cfg.t_con) {
          removed[b] = true;
        }
      }
    }
    for (std::size_t a = 0; a < kept.size(); ++a) {
      if (!removed[a]) result.push_back(detections[kept[a]]);
    }
  }
  return result;
}

}  // namespace sos
