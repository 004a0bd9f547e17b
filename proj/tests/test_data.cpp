#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "sos/data.hpp"
#include "sos/error.hpp"

using sos::DatasetManifest;
using sos::Error;
using sos::ErrorKind;

namespace {

const char* kMinimalManifest = R"({
  "categories": ["cat", "dog"],
  "images": [
    {"image_id": "a", "width": 100, "height": 80,
     "active_labels": [1],
     "proposals": [[10, 10, 20, 20], [-5, -5, 30, 30]],
     "pseudo_gt": [{"bbox": [10, 10, 20, 20], "class_id": 1, "score": 0.5}],
     "split": null}
  ]
})";

std::filesystem::path temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "sos_data_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("minimal manifest parses") {
  const DatasetManifest m = sos::parse_manifest(kMinimalManifest);
  CHECK(m.num_classes() == 2);
  REQUIRE(m.images.size() == 1);
  const sos::ImageRecord& rec = m.images[0];
  CHECK(rec.image_id == "a");
  CHECK(rec.active_labels == std::set<int>{1});
  REQUIRE(rec.proposals.has_value());
  CHECK(rec.proposals->size() == 2);
  // Out-of-bounds proposal is clamped, not rejected.
  CHECK((*rec.proposals)[1].x1 == 0.0);
  CHECK((*rec.proposals)[1].y1 == 0.0);
  CHECK((*rec.proposals)[1].x2 == 25.0);
  CHECK(!rec.split.has_value());
}

TEST_CASE("manifest error taxonomy") {
  CHECK_THROWS_WITH_AS(sos::parse_manifest("{nope"), doctest::Contains("malformed"),
                       Error);
  try {
    sos::parse_manifest("{nope");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kParse);
  }

  try {
    sos::parse_manifest(R"({"categories": []})");
    FAIL("expected schema error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kSchema);
  }

  const std::string dup = R"({
    "categories": ["c"],
    "images": [
      {"image_id": "a", "width": 10, "height": 10, "active_labels": [0]},
      {"image_id": "a", "width": 10, "height": 10, "active_labels": [0]}
    ]})";
  try {
    sos::parse_manifest(dup);
    FAIL("expected validation error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kValidation);
  }

  const std::string bad_label = R"({
    "categories": ["c"],
    "images": [{"image_id": "a", "width": 10, "height": 10, "active_labels": [3]}]})";
  CHECK_THROWS_AS(sos::parse_manifest(bad_label), Error);

  const std::string no_labels = R"({
    "categories": ["c"],
    "images": [{"image_id": "a", "width": 10, "height": 10, "active_labels": []}]})";
  CHECK_THROWS_AS(sos::parse_manifest(no_labels), Error);

  const std::string negative_extent = R"({
    "categories": ["c"],
    "images": [{"image_id": "a", "width": 10, "height": 10,
                "active_labels": [0], "proposals": [[5, 5, -2, 3]]}]})";
  CHECK_THROWS_AS(sos::parse_manifest(negative_extent), Error);
}

TEST_CASE("manifest save/load round trip is stable") {
  const DatasetManifest m = sos::parse_manifest(kMinimalManifest);
  const auto path = temp_path("roundtrip.json");
  sos::save_manifest(m, path.string());

  const DatasetManifest again = sos::load_manifest(path.string());
  CHECK(sos::manifest_to_json(again) == sos::manifest_to_json(m));

  // Byte-identical across saves, newline-terminated.
  const std::string serialized = sos::manifest_to_json(m);
  CHECK(serialized.back() == '\n');
  sos::save_manifest(again, path.string());
  std::ifstream in(path);
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  CHECK(bytes == serialized);
}

TEST_CASE("empty image list is valid") {
  const DatasetManifest m = sos::parse_manifest(R"({"categories": [], "images": []})");
  CHECK(m.images.empty());
  const auto path = temp_path("empty.json");
  sos::save_manifest(m, path.string());
  CHECK(sos::load_manifest(path.string()).images.empty());
}

TEST_CASE("unwritable path raises an io error") {
  const DatasetManifest m = sos::parse_manifest(R"({"categories": [], "images": []})");
  try {
    sos::save_manifest(m, "/nonexistent_dir_sos/x.json");
    FAIL("expected io error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kIo);
  }
}

TEST_CASE("detections round trip") {
  std::vector<sos::ImageDetections> dets(2);
  dets[0].image_id = "a";
  dets[0].detections.push_back(
      sos::ScoredBox{sos::Box{1, 2, 11, 22}, 0.25, 3});
  dets[1].image_id = "b";
  const auto path = temp_path("dets.jsonl");
  sos::save_detections(dets, path.string());
  const auto again = sos::load_detections(path.string());
  REQUIRE(again.size() == 2);
  CHECK(again[0].image_id == "a");
  REQUIRE(again[0].detections.size() == 1);
  CHECK(again[0].detections[0].box.x2 == 11.0);
  CHECK(again[0].detections[0].score == 0.25);
  CHECK(again[0].detections[0].class_id == 3);
  CHECK(again[1].detections.empty());
}

TEST_CASE("synthetic generator is deterministic in the seed") {
  const auto a = sos::generate_synthetic_dataset(42, 8, 3, 0.4);
  const auto b = sos::generate_synthetic_dataset(42, 8, 3, 0.4);
  CHECK(sos::manifest_to_json(a.train) == sos::manifest_to_json(b.train));
  CHECK(sos::manifest_to_json(a.groundtruth) ==
        sos::manifest_to_json(b.groundtruth));
  REQUIRE(a.scores.size() == b.scores.size());
  for (std::size_t i = 0; i < a.scores.size(); ++i) {
    CHECK(a.scores[i].data() == b.scores[i].data());
  }
  const auto c = sos::generate_synthetic_dataset(43, 8, 3, 0.4);
  CHECK(sos::manifest_to_json(a.train) != sos::manifest_to_json(c.train));
}

TEST_CASE("synthetic generator rejects bad arguments") {
  CHECK_THROWS_AS(sos::generate_synthetic_dataset(1, 0, 3, 0.0), Error);
  CHECK_THROWS_AS(sos::generate_synthetic_dataset(1, 5, 0, 0.0), Error);
  CHECK_THROWS_AS(sos::generate_synthetic_dataset(1, 5, 3, 1.5), Error);
}

TEST_CASE("synthetic labels equal the true object classes") {
  const auto data = sos::generate_synthetic_dataset(7, 25, 5, 0.3);
  REQUIRE(data.train.images.size() == 25);
  for (std::size_t i = 0; i < data.train.images.size(); ++i) {
    const auto& train_rec = data.train.images[i];
    const auto& gt_rec = data.groundtruth.images[i];
    std::set<int> gt_classes;
    for (const sos::ScoredBox& gt : *gt_rec.pseudo_gt) {
      gt_classes.insert(gt.class_id);
    }
    CHECK(train_rec.active_labels == gt_classes);
    for (const sos::Box& b : *train_rec.proposals) {
      CHECK(sos::is_valid_box(b));
      CHECK(b.x2 <= train_rec.width);
      CHECK(b.y2 <= train_rec.height);
      CHECK(b.x1 >= 0.0);
      CHECK(b.y1 >= 0.0);
    }
  }
}

TEST_CASE("noise-free scores rank a tight proposal first for every object") {
  const auto data = sos::generate_synthetic_dataset(99, 30, 4, 0.0);
  for (std::size_t i = 0; i < data.train.images.size(); ++i) {
    const auto& proposals = *data.train.images[i].proposals;
    const auto& gts = *data.groundtruth.images[i].pseudo_gt;
    const sos::Matrix& scores = data.scores[i];
    for (const sos::ScoredBox& gt : gts) {
      // Among proposals assigned to this object by best overlap, the top
      // score for the object's class must localize it.
      double best_score = -1.0;
      std::size_t best = 0;
      for (std::size_t j = 0; j < proposals.size(); ++j) {
        double overlap_here = sos::iou(proposals[j], gt.box);
        bool assigned = overlap_here > 0.0;
        for (const sos::ScoredBox& other : gts) {
          if (sos::iou(proposals[j], other.box) > overlap_here) {
            assigned = false;
            break;
          }
        }
        if (!assigned) continue;
        const auto row = static_cast<std::size_t>(gt.class_id);
        if (scores(row, j) > best_score) {
          best_score = scores(row, j);
          best = j;
        }
      }
      REQUIRE(best_score >= 0.0);
      CHECK(sos::iou(proposals[best], gt.box) >= 0.5);
    }
  }
}
