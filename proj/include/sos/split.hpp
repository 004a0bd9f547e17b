#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sos/data.hpp"

namespace sos {

// Loss components reported for one RoI. Background RoIs never contribute to
// the per-image split loss.
struct RoiLoss {
  bool is_foreground = false;
  double rpn_cls = 0.0;
  double rpn_reg = 0.0;
  double roi_cls = 0.0;
  double roi_reg = 0.0;
};

struct RoiLossBreakdown {
  std::string image_id;
  std::vector<RoiLoss> rois;
};

struct SplitLossRecord {
  std::string image_id;
  double loss = 0.0;  // +inf exactly when n_pos == 0
  std::int64_t n_pos = 0;
};

// Mean of the four-component sums over foreground RoIs. Images with no
// foreground RoI get the +inf sentinel: their pseudo boxes cannot be
// trusted, so they must never rank as clean.
SplitLossRecord split_loss_image(const RoiLossBreakdown& rois);

struct Partition {
  std::vector<std::string> labeled;
  std::vector<std::string> unlabeled;
};

// The k smallest-loss images become the labeled subset, ties broken by
// image_id. Both output lists are sorted by (loss, image_id).
Partition partition_dataset(const std::vector<SplitLossRecord>& records,
                            std::int64_t k);

// Stamp split tags onto a manifest; every id must name a manifest image and
// the two lists must cover the manifest exactly.
void apply_partition(DatasetManifest& manifest, const Partition& partition);

// RoI breakdown JSON-lines, one image per line:
// { "image_id": string,
//   "rois": [{"is_foreground":bool,"roi_cls":num,"roi_reg":num,
//             "rpn_cls":num,"rpn_reg":num}] }
std::vector<RoiLossBreakdown> load_roi_breakdowns(const std::string& path);
void save_roi_breakdowns(const std::vector<RoiLossBreakdown>& breakdowns,
                         const std::string& path);

}  // namespace sos
