#include "sos/split.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "json_stable.hpp"
#include "sos/error.hpp"

namespace sos {

using nlohmann::json;

SplitLossRecord split_loss_image(const RoiLossBreakdown& rois) {
  SplitLossRecord record;
  record.image_id = rois.image_id;
  double total = 0.0;
  for (const RoiLoss& roi : rois.rois) {
    const double parts[] = {roi.rpn_cls, roi.rpn_reg, roi.roi_cls, roi.roi_reg};
    for (const double part : parts) {
      if (!(part >= 0.0) || !std::isfinite(part)) {
        fail(ErrorKind::kValidation,
             "split_loss_image: negative or non-finite loss component in \"" +
                 rois.image_id + "\"");
      }
    }
    if (!roi.is_foreground) continue;
    total += roi.rpn_cls + roi.rpn_reg + roi.roi_cls + roi.roi_reg;
    ++record.n_pos;
  }
  record.loss = record.n_pos > 0
                    ? total / static_cast<double>(record.n_pos)
                    : std::numeric_limits<double>::infinity();
  return record;
}

Partition partition_dataset(const std::vector<SplitLossRecord>& records,
                            std::int64_t k) {
  if (k < 0 || k > static_cast<std::int64_t>(records.size())) {
    fail(ErrorKind::kInvalidArgument, "partition_dataset: k out of range");
  }
  std::vector<const SplitLossRecord*> order;
  order.reserve(records.size());
  for (const SplitLossRecord& r : records) order.push_back(&r);
  std::sort(order.begin(), order.end(),
            [](const SplitLossRecord* a, const SplitLossRecord* b) {
              if (a->loss != b->loss) return a->loss < b->loss;
              return a->image_id < b->image_id;
            });

  Partition partition;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (static_cast<std::int64_t>(i) < k) {
      partition.labeled.push_back(order[i]->image_id);
    } else {
      partition.unlabeled.push_back(order[i]->image_id);
    }
  }
  return partition;
}

void apply_partition(DatasetManifest& manifest, const Partition& partition) {
  std::unordered_map<std::string, SplitTag> tags;
  for (const std::string& id : partition.labeled) tags.emplace(id, SplitTag::kLabeled);
  for (const std::string& id : partition.unlabeled) {
    if (!tags.emplace(id, SplitTag::kUnlabeled).second) {
      fail(ErrorKind::kValidation,
           "apply_partition: \"" + id + "\" appears in both subsets");
    }
  }
  if (tags.size() != manifest.images.size()) {
    fail(ErrorKind::kValidation,
         "apply_partition: partition does not cover the manifest");
  }
  for (ImageRecord& rec : manifest.images) {
    const auto it = tags.find(rec.image_id);
    if (it == tags.end()) {
      fail(ErrorKind::kValidation,
           "apply_partition: manifest image \"" + rec.image_id +
               "\" missing from partition");
    }
    rec.split = it->second;
  }
}

std::vector<RoiLossBreakdown> load_roi_breakdowns(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) fail(ErrorKind::kIo, "read failed: " + path);

  std::vector<RoiLossBreakdown> result;
  std::unordered_set<std::string> seen;
  std::istringstream lines(buf.str());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    json v = json::parse(line, nullptr, false);
    if (v.is_discarded()) fail(ErrorKind::kParse, "malformed JSON at " + where);
    if (!v.is_object() || !v.contains("image_id") || !v.contains("rois")) {
      fail(ErrorKind::kSchema, where + ": expected {image_id, rois}");
    }
    if (!v["image_id"].is_string() || !v["rois"].is_array()) {
      fail(ErrorKind::kSchema, where + ": wrong field types");
    }
    RoiLossBreakdown breakdown;
    breakdown.image_id = v["image_id"].get<std::string>();
    for (const auto& r : v["rois"]) {
      RoiLoss roi;
      for (const char* key :
           {"is_foreground", "roi_cls", "roi_reg", "rpn_cls", "rpn_reg"}) {
        if (!r.contains(key)) {
          fail(ErrorKind::kSchema,
               where + ": roi missing field \"" + std::string(key) + "\"");
        }
      }
      if (!r["is_foreground"].is_boolean()) {
        fail(ErrorKind::kSchema, where + ": is_foreground must be a boolean");
      }
      roi.is_foreground = r["is_foreground"].get<bool>();
      roi.roi_cls = r["roi_cls"].get<double>();
      roi.roi_reg = r["roi_reg"].get<double>();
      roi.rpn_cls = r["rpn_cls"].get<double>();
      roi.rpn_reg = r["rpn_reg"].get<double>();
      breakdown.rois.push_back(roi);
    }
    if (!seen.insert(breakdown.image_id).second) {
      fail(ErrorKind::kValidation,
           where + ": duplicate image_id \"" + breakdown.image_id + "\"");
    }
    result.push_back(std::move(breakdown));
  }
  return result;
}

void save_roi_breakdowns(const std::vector<RoiLossBreakdown>& breakdowns,
                         const std::string& path) {
  std::string text;
  for (const RoiLossBreakdown& breakdown : breakdowns) {
    json v;
    v["image_id"] = breakdown.image_id;
    json rois = json::array();
    for (const RoiLoss& roi : breakdown.rois) {
      json r;
      r["is_foreground"] = roi.is_foreground;
      r["roi_cls"] = roi.roi_cls;
      r["roi_reg"] = roi.roi_reg;
      r["rpn_cls"] = roi.rpn_cls;
      r["rpn_reg"] = roi.rpn_reg;
      rois.push_back(std::move(r));
    }
    v["rois"] = std::move(rois);
    text += detail::dump_stable(v);
    text.push_back('\n');
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open " + path + " for writing");
  out << text;
  out.flush();
  if (!out) fail(ErrorKind::kIo, "write failed: " + path);
}

}  // namespace sos
