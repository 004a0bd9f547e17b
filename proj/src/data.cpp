#include "sos/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "json_stable.hpp"
#include "sos/error.hpp"
#include "sos/rng.hpp"

namespace sos {

using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) fail(ErrorKind::kIo, "read failed: " + path);
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open " + path + " for writing");
  out << text;
  out.flush();
  if (!out) fail(ErrorKind::kIo, "write failed: " + path);
}

json parse_json(const std::string& text, const std::string& where) {
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) fail(ErrorKind::kParse, "malformed JSON in " + where);
  return value;
}

const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) fail(ErrorKind::kSchema, where + ": expected object");
  const auto it = obj.find(key);
  if (it == obj.end()) {
    fail(ErrorKind::kSchema, where + ": missing field \"" + key + "\"");
  }
  return *it;
}

double require_number(const json& v, const std::string& where) {
  if (!v.is_number()) fail(ErrorKind::kSchema, where + ": expected number");
  return v.get<double>();
}

int require_int(const json& v, const std::string& where) {
  if (!v.is_number_integer()) {
    fail(ErrorKind::kSchema, where + ": expected integer");
  }
  return v.get<int>();
}

std::string require_string(const json& v, const std::string& where) {
  if (!v.is_string()) fail(ErrorKind::kSchema, where + ": expected string");
  return v.get<std::string>();
}

double clamp(double v, double lo, double hi) {
  return std::min(std::max(v, lo), hi);
}

// (x, y, w, h) absolute -> corner form, clamped to the image.
Box parse_bbox(const json& v, double width, double height,
               const std::string& where) {
  if (!v.is_array() || v.size() != 4) {
    fail(ErrorKind::kSchema, where + ": bbox must be [x, y, w, h]");
  }
  const double x = require_number(v[0], where);
  const double y = require_number(v[1], where);
  const double w = require_number(v[2], where);
  const double h = require_number(v[3], where);
  if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(w) ||
      !std::isfinite(h)) {
    fail(ErrorKind::kValidation, where + ": non-finite bbox");
  }
  if (w < 0.0 || h < 0.0) {
    fail(ErrorKind::kValidation, where + ": negative bbox extent");
  }
  Box b;
  b.x1 = clamp(x, 0.0, width);
  b.y1 = clamp(y, 0.0, height);
  b.x2 = clamp(x + w, 0.0, width);
  b.y2 = clamp(y + h, 0.0, height);
  if (b.x2 < b.x1) b.x2 = b.x1;
  if (b.y2 < b.y1) b.y2 = b.y1;
  return b;
}

json bbox_to_json(const Box& b) {
  return json::array({b.x1, b.y1, b.x2 - b.x1, b.y2 - b.y1});
}

ScoredBox parse_scored_box(const json& v, double width, double height,
                           int n_classes, const std::string& where) {
  ScoredBox sb;
  sb.box = parse_bbox(require(v, "bbox", where), width, height, where);
  sb.class_id = require_int(require(v, "class_id", where), where);
  sb.score = require_number(require(v, "score", where), where);
  if (sb.class_id < 0 || sb.class_id >= n_classes) {
    fail(ErrorKind::kValidation, where + ": class_id out of range");
  }
  if (!std::isfinite(sb.score) || sb.score < 0.0 || sb.score > 1.0) {
    fail(ErrorKind::kValidation, where + ": score outside [0, 1]");
  }
  return sb;
}

ImageRecord parse_image(const json& v, int n_classes) {
  ImageRecord rec;
  rec.image_id = require_string(require(v, "image_id", "image"), "image_id");
  const std::string where = "image \"" + rec.image_id + "\"";
  rec.width = require_number(require(v, "width", where), where + ".width");
  rec.height = require_number(require(v, "height", where), where + ".height");
  if (!(rec.width > 0.0) || !(rec.height > 0.0) ||
      !std::isfinite(rec.width) || !std::isfinite(rec.height)) {
    fail(ErrorKind::kValidation, where + ": width/height must be positive");
  }

  const json& labels = require(v, "active_labels", where);
  if (!labels.is_array()) {
    fail(ErrorKind::kSchema, where + ": active_labels must be an array");
  }
  for (const auto& l : labels) {
    const int label = require_int(l, where + ".active_labels");
    if (label < 0 || label >= n_classes) {
      fail(ErrorKind::kValidation, where + ": label out of range");
    }
    rec.active_labels.insert(label);
  }
  if (rec.active_labels.empty()) {
    fail(ErrorKind::kValidation, where + ": active_labels must be non-empty");
  }

  if (const auto it = v.find("proposals"); it != v.end() && !it->is_null()) {
    if (!it->is_array()) {
      fail(ErrorKind::kSchema, where + ": proposals must be an array");
    }
    std::vector<Box> boxes;
    boxes.reserve(it->size());
    for (const auto& b : *it) {
      boxes.push_back(parse_bbox(b, rec.width, rec.height, where));
    }
    rec.proposals = std::move(boxes);
  }

  if (const auto it = v.find("pseudo_gt"); it != v.end() && !it->is_null()) {
    if (!it->is_array()) {
      fail(ErrorKind::kSchema, where + ": pseudo_gt must be an array");
    }
    std::vector<ScoredBox> boxes;
    boxes.reserve(it->size());
    for (const auto& b : *it) {
      boxes.push_back(
          parse_scored_box(b, rec.width, rec.height, n_classes, where));
    }
    rec.pseudo_gt = std::move(boxes);
  }

  if (const auto it = v.find("split"); it != v.end() && !it->is_null()) {
    const std::string tag = require_string(*it, where + ".split");
    if (tag == "labeled") {
      rec.split = SplitTag::kLabeled;
    } else if (tag == "unlabeled") {
      rec.split = SplitTag::kUnlabeled;
    } else {
      fail(ErrorKind::kValidation, where + ": unknown split tag \"" + tag + "\"");
    }
  }
  return rec;
}

}  // namespace

const ImageRecord* DatasetManifest::find(const std::string& image_id) const {
  for (const ImageRecord& rec : images) {
    if (rec.image_id == image_id) return &rec;
  }
  return nullptr;
}

DatasetManifest parse_manifest(const std::string& json_text) {
  const json root = parse_json(json_text, "manifest");
  DatasetManifest m;

  const json& categories = require(root, "categories", "manifest");
  if (!categories.is_array()) {
    fail(ErrorKind::kSchema, "manifest: categories must be an array");
  }
  for (const auto& c : categories) {
    m.categories.push_back(require_string(c, "manifest.categories"));
  }

  const json& images = require(root, "images", "manifest");
  if (!images.is_array()) {
    fail(ErrorKind::kSchema, "manifest: images must be an array");
  }
  std::unordered_set<std::string> seen;
  for (const auto& v : images) {
    ImageRecord rec = parse_image(v, m.num_classes());
    if (!seen.insert(rec.image_id).second) {
      fail(ErrorKind::kValidation,
           "duplicate image_id \"" + rec.image_id + "\"");
    }
    m.images.push_back(std::move(rec));
  }
  return m;
}

DatasetManifest load_manifest(const std::string& path) {
  return parse_manifest(read_file(path));
}

std::string manifest_to_json(const DatasetManifest& manifest) {
  json root;
  root["categories"] = manifest.categories;
  json images = json::array();
  for (const ImageRecord& rec : manifest.images) {
    json v;
    v["image_id"] = rec.image_id;
    v["width"] = rec.width;
    v["height"] = rec.height;
    v["active_labels"] = json::array();
    for (const int label : rec.active_labels) v["active_labels"].push_back(label);
    if (rec.proposals) {
      json arr = json::array();
      for (const Box& b : *rec.proposals) arr.push_back(bbox_to_json(b));
      v["proposals"] = std::move(arr);
    } else {
      v["proposals"] = nullptr;
    }
    if (rec.pseudo_gt) {
      json arr = json::array();
      for (const ScoredBox& sb : *rec.pseudo_gt) {
        json d;
        d["bbox"] = bbox_to_json(sb.box);
        d["class_id"] = sb.class_id;
        d["score"] = sb.score;
        arr.push_back(std::move(d));
      }
      v["pseudo_gt"] = std::move(arr);
    } else {
      v["pseudo_gt"] = nullptr;
    }
    if (rec.split) {
      v["split"] = *rec.split == SplitTag::kLabeled ? "labeled" : "unlabeled";
    } else {
      v["split"] = nullptr;
    }
    images.push_back(std::move(v));
  }
  root["images"] = std::move(images);
  return detail::dump_stable(root) + "\n";
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
  write_file(path, manifest_to_json(manifest));
}

std::vector<ImageDetections> load_detections(const std::string& path) {
  const std::string text = read_file(path);
  std::vector<ImageDetections> result;
  std::unordered_set<std::string> seen;
  std::istringstream lines(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    const json v = parse_json(line, where);
    ImageDetections dets;
    dets.image_id = require_string(require(v, "image_id", where), where);
    const json& arr = require(v, "detections", where);
    if (!arr.is_array()) {
      fail(ErrorKind::kSchema, where + ": detections must be an array");
    }
    for (const auto& d : arr) {
      ScoredBox sb;
      const json& bbox = require(d, "bbox", where);
      if (!bbox.is_array() || bbox.size() != 4) {
        fail(ErrorKind::kSchema, where + ": bbox must be [x, y, w, h]");
      }
      const double x = require_number(bbox[0], where);
      const double y = require_number(bbox[1], where);
      const double w = require_number(bbox[2], where);
      const double h = require_number(bbox[3], where);
      if (w < 0.0 || h < 0.0) {
        fail(ErrorKind::kValidation, where + ": negative bbox extent");
      }
      sb.box = Box{x, y, x + w, y + h};
      if (!is_valid_box(sb.box)) {
        fail(ErrorKind::kValidation, where + ": invalid bbox");
      }
      sb.class_id = require_int(require(d, "class_id", where), where);
      sb.score = require_number(require(d, "score", where), where);
      if (sb.class_id < 0) {
        fail(ErrorKind::kValidation, where + ": negative class_id");
      }
      if (!std::isfinite(sb.score) || sb.score < 0.0 || sb.score > 1.0) {
        fail(ErrorKind::kValidation, where + ": score outside [0, 1]");
      }
      dets.detections.push_back(sb);
    }
    if (!seen.insert(dets.image_id).second) {
      fail(ErrorKind::kValidation,
           where + ": duplicate image_id \"" + dets.image_id + "\"");
    }
    result.push_back(std::move(dets));
  }
  return result;
}

std::string detections_to_json_line(const ImageDetections& detections) {
  json v;
  v["image_id"] = detections.image_id;
  json arr = json::array();
  for (const ScoredBox& sb : detections.detections) {
    json d;
    d["bbox"] = bbox_to_json(sb.box);
    d["class_id"] = sb.class_id;
    d["score"] = sb.score;
    arr.push_back(std::move(d));
  }
  v["detections"] = std::move(arr);
  return detail::dump_stable(v);
}

void save_detections(const std::vector<ImageDetections>& detections,
                     const std::string& path) {
  std::string text;
  for (const ImageDetections& d : detections) {
    text += detections_to_json_line(d);
    text.push_back('\n');
  }
  write_file(path, text);
}

namespace {

// Per-class geometric niche, in image-fraction units.
struct ClassNiche {
  double u = 0.5, v = 0.5;    // center
  double sw = 0.2, sh = 0.2;  // box size
};

Box clamp_box(Box b, double width, double height) {
  b.x1 = clamp(b.x1, 0.0, width);
  b.y1 = clamp(b.y1, 0.0, height);
  b.x2 = clamp(b.x2, b.x1, width);
  b.y2 = clamp(b.y2, b.y1, height);
  return b;
}

std::string synth_image_id(std::int64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "img_%06lld",
                static_cast<long long>(index));
  return buf;
}

}  // namespace

SyntheticDataset generate_synthetic_dataset(std::uint64_t seed,
                                            std::int64_t n_images,
                                            int n_classes, double noise) {
  if (n_images < 1) {
    fail(ErrorKind::kInvalidArgument, "n_images must be >= 1");
  }
  if (n_classes < 1) {
    fail(ErrorKind::kInvalidArgument, "n_classes must be >= 1");
  }
  if (!(noise >= 0.0 && noise <= 1.0)) {
    fail(ErrorKind::kInvalidArgument, "noise must be in [0, 1]");
  }

  Rng root(seed);
  Rng niche_rng = root.fork(1);
  std::vector<ClassNiche> niches(static_cast<std::size_t>(n_classes));
  for (ClassNiche& n : niches) {
    n.u = niche_rng.uniform(0.18, 0.82);
    n.v = niche_rng.uniform(0.18, 0.82);
    n.sw = niche_rng.uniform(0.14, 0.30);
    n.sh = niche_rng.uniform(0.14, 0.30);
  }

  SyntheticDataset out;
  for (int c = 0; c < n_classes; ++c) {
    out.train.categories.push_back("class_" + std::to_string(c));
  }
  out.groundtruth.categories = out.train.categories;

  Rng scene_rng = root.fork(2);
  for (std::int64_t i = 0; i < n_images; ++i) {
    const double width = scene_rng.uniform(560.0, 704.0);
    const double height = scene_rng.uniform(420.0, 528.0);

    const auto n_objects = scene_rng.uniform_int(1, 5);
    std::vector<ScoredBox> objects;
    for (std::int64_t o = 0; o < n_objects; ++o) {
      const int cls = static_cast<int>(scene_rng.uniform_int(0, n_classes - 1));
      const ClassNiche& n = niches[static_cast<std::size_t>(cls)];
      const double cx = (n.u + scene_rng.uniform(-0.06, 0.06)) * width;
      const double cy = (n.v + scene_rng.uniform(-0.06, 0.06)) * height;
      const double bw = n.sw * scene_rng.uniform(0.85, 1.18) * width;
      const double bh = n.sh * scene_rng.uniform(0.85, 1.18) * height;
      ScoredBox obj;
      obj.box = clamp_box(Box{cx - bw / 2, cy - bh / 2, cx + bw / 2, cy + bh / 2},
                          width, height);
      obj.score = 1.0;
      obj.class_id = cls;
      objects.push_back(obj);
    }

    std::vector<Box> proposals;
    for (const ScoredBox& obj : objects) {
      proposals.push_back(obj.box);  // the object itself is always proposed
      const double bw = obj.box.width();
      const double bh = obj.box.height();
      for (int j = 0; j < 4; ++j) {
        const double dx = scene_rng.uniform(-0.12, 0.12) * bw;
        const double dy = scene_rng.uniform(-0.12, 0.12) * bh;
        const double sx = scene_rng.uniform(0.82, 1.22);
        const double sy = scene_rng.uniform(0.82, 1.22);
        const double cx = (obj.box.x1 + obj.box.x2) / 2 + dx;
        const double cy = (obj.box.y1 + obj.box.y2) / 2 + dy;
        proposals.push_back(clamp_box(Box{cx - bw * sx / 2, cy - bh * sy / 2,
                                          cx + bw * sx / 2, cy + bh * sy / 2},
                                      width, height));
      }
    }
    const auto n_spurious = 6 + scene_rng.uniform_int(0, 4);
    for (std::int64_t s = 0; s < n_spurious; ++s) {
      const double bw = scene_rng.uniform(0.06, 0.38) * width;
      const double bh = scene_rng.uniform(0.06, 0.38) * height;
      const double cx = scene_rng.uniform(0.0, 1.0) * width;
      const double cy = scene_rng.uniform(0.0, 1.0) * height;
      proposals.push_back(clamp_box(
          Box{cx - bw / 2, cy - bh / 2, cx + bw / 2, cy + bh / 2}, width,
          height));
    }

    // Scores: best overlap with a same-class object sets the base, then the
    // whole matrix is blended with uniform noise.
    Matrix scores(static_cast<std::size_t>(n_classes), proposals.size(), 0.0);
    for (std::size_t j = 0; j < proposals.size(); ++j) {
      for (int c = 0; c < n_classes; ++c) {
        double best = 0.0;
        for (const ScoredBox& obj : objects) {
          if (obj.class_id == c) best = std::max(best, iou(proposals[j], obj.box));
        }
        const double base = 0.03 + 0.95 * best;
        const double corrupted =
            (1.0 - noise) * base + noise * scene_rng.uniform();
        scores(static_cast<std::size_t>(c), j) = clamp(corrupted, 0.0, 1.0);
      }
    }

    ImageRecord train_rec;
    train_rec.image_id = synth_image_id(i);
    train_rec.width = width;
    train_rec.height = height;
    for (const ScoredBox& obj : objects) train_rec.active_labels.insert(obj.class_id);
    train_rec.proposals = proposals;

    ImageRecord gt_rec = train_rec;
    gt_rec.proposals.reset();
    gt_rec.pseudo_gt = objects;

    out.train.images.push_back(std::move(train_rec));
    out.groundtruth.images.push_back(std::move(gt_rec));
    out.scores.push_back(std::move(scores));
  }
  return out;
}

}  // namespace sos
