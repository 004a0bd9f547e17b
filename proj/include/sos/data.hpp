#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sos/geom.hpp"
#include "sos/matrix.hpp"

namespace sos {

enum class SplitTag { kLabeled, kUnlabeled };

// One training image: identity, image-level class labels, and the optional
// box payloads the pipeline stages fill in. All boxes live in
// [0, width] x [0, height]; loaders clamp before validation.
struct ImageRecord {
  std::string image_id;
  double width = 0.0;
  double height = 0.0;
  std::set<int> active_labels;
  std::optional<std::vector<Box>> proposals;
  std::optional<std::vector<ScoredBox>> pseudo_gt;
  std::optional<SplitTag> split;
};

struct DatasetManifest {
  std::vector<std::string> categories;
  std::vector<ImageRecord> images;

  int num_classes() const { return static_cast<int>(categories.size()); }
  const ImageRecord* find(const std::string& image_id) const;
};

// Manifest JSON:
// { "categories": [string],
//   "images": [ { "image_id": string, "width": number, "height": number,
//                 "active_labels": [int], "proposals": [[x,y,w,h]],
//                 "pseudo_gt": [{"bbox":[x,y,w,h],"class_id":int,
//                                "score":number}],
//                 "split": "labeled"|"unlabeled"|null } ] }
// Boxes are stored (x, y, w, h) absolute and converted to corner form on
// load. Saving is byte-stable: sorted keys, 17-significant-digit floats,
// newline-terminated.
DatasetManifest load_manifest(const std::string& path);
DatasetManifest parse_manifest(const std::string& json_text);
void save_manifest(const DatasetManifest& manifest, const std::string& path);
std::string manifest_to_json(const DatasetManifest& manifest);

// Detections JSON-lines, one image per line:
// { "detections": [{"bbox":[x,y,w,h],"class_id":int,"score":number}],
//   "image_id": string }
struct ImageDetections {
  std::string image_id;
  std::vector<ScoredBox> detections;
};

std::vector<ImageDetections> load_detections(const std::string& path);
void save_detections(const std::vector<ImageDetections>& detections,
                     const std::string& path);
std::string detections_to_json_line(const ImageDetections& detections);

// Synthetic desk-scale dataset. Classes get stable geometric niches
// (position and size ranges drawn once from the seed) so a detector scoring
// box geometry has something to learn. Proposals are the true boxes plus
// jittered copies plus spurious boxes; the score of proposal j for class c
// starts from the best overlap with a class-c object and is corrupted by
// `noise` (score = (1-noise)*base + noise*uniform).
struct SyntheticDataset {
  DatasetManifest train;        // proposals + image-level labels, no boxes
  DatasetManifest groundtruth;  // same images, true boxes in pseudo_gt
  std::vector<Matrix> scores;   // per image: classes x proposals
};

SyntheticDataset generate_synthetic_dataset(std::uint64_t seed,
                                            std::int64_t n_images,
                                            int n_classes, double noise);

}  // namespace sos
