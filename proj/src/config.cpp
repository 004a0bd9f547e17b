#include "sos/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sos/error.hpp"
#include "sos/eval.hpp"

namespace sos {

using nlohmann::json;

PipelineConfig preset_config(const std::string& name) {
  PipelineConfig cfg;
  cfg.preset = name;
  cfg.eval_thresholds = default_eval_thresholds();
  // Mining defaults (p = 0.1, s_t = 0.05, nms 0.01) are shared everywhere.
  if (name == "voc2007") {
    cfg.pgf = PgfConfig{0.2, 0.0, 0.85};
    cfg.split_k = 2000;
    cfg.ssod.k_labeled = 2000;
  } else if (name == "voc2012") {
    cfg.pgf = PgfConfig{0.2, 0.0, 0.85};
    cfg.split_k = 4000;
    cfg.ssod.k_labeled = 4000;
  } else if (name == "coco") {
    cfg.pgf = PgfConfig{0.4, 0.1, 1.0};
    cfg.split_k = 30000;
    cfg.ssod.k_labeled = 30000;
  } else if (name == "synthetic") {
    cfg.pgf = PgfConfig{0.2, 0.0, 0.85};
    cfg.split_k = 100;
    cfg.ssod.k_labeled = 100;
    cfg.ssod.alpha = 0.99;  // desk-scale run lengths need a faster teacher
  } else {
    fail(ErrorKind::kInvalidArgument, "unknown preset \"" + name + "\"");
  }
  return cfg;
}

namespace {

double get_number(const json& v, const char* key, double fallback) {
  const auto it = v.find(key);
  if (it == v.end()) return fallback;
  if (!it->is_number()) {
    fail(ErrorKind::kSchema,
         "config: \"" + std::string(key) + "\" must be a number");
  }
  return it->get<double>();
}

std::int64_t get_integer(const json& v, const char* key, std::int64_t fallback) {
  const auto it = v.find(key);
  if (it == v.end()) return fallback;
  if (!it->is_number_integer()) {
    fail(ErrorKind::kSchema,
         "config: \"" + std::string(key) + "\" must be an integer");
  }
  return it->get<std::int64_t>();
}

bool get_boolean(const json& v, const char* key, bool fallback) {
  const auto it = v.find(key);
  if (it == v.end()) return fallback;
  if (!it->is_boolean()) {
    fail(ErrorKind::kSchema,
         "config: \"" + std::string(key) + "\" must be a boolean");
  }
  return it->get<bool>();
}

void overlay(PipelineConfig& cfg, const json& root) {
  if (!root.is_object()) fail(ErrorKind::kSchema, "config: expected an object");

  if (const auto it = root.find("mining"); it != root.end()) {
    cfg.mining.p = get_number(*it, "p", cfg.mining.p);
    cfg.mining.s_t = get_number(*it, "s_t", cfg.mining.s_t);
    cfg.mining.nms_threshold =
        get_number(*it, "nms_threshold", cfg.mining.nms_threshold);
    cfg.mining.round_down = get_boolean(*it, "round_down", cfg.mining.round_down);
  }
  if (const auto it = root.find("pgf"); it != root.end()) {
    cfg.pgf.t_keep = get_number(*it, "t_keep", cfg.pgf.t_keep);
    cfg.pgf.t_top = get_number(*it, "t_top", cfg.pgf.t_top);
    cfg.pgf.t_con = get_number(*it, "t_con", cfg.pgf.t_con);
  }
  if (const auto it = root.find("ssod"); it != root.end()) {
    cfg.ssod.lambda_u = get_number(*it, "lambda_u", cfg.ssod.lambda_u);
    cfg.ssod.confidence_threshold = get_number(*it, "confidence_threshold",
                                               cfg.ssod.confidence_threshold);
    cfg.ssod.alpha = get_number(*it, "alpha", cfg.ssod.alpha);
    cfg.ssod.k_labeled = get_integer(*it, "k_labeled", cfg.ssod.k_labeled);
  }
  cfg.split_k = get_integer(root, "split_k", cfg.split_k);
  if (const auto it = root.find("eval_thresholds"); it != root.end()) {
    if (!it->is_array() || it->empty()) {
      fail(ErrorKind::kSchema, "config: eval_thresholds must be a non-empty array");
    }
    cfg.eval_thresholds.clear();
    for (const auto& t : *it) {
      if (!t.is_number()) {
        fail(ErrorKind::kSchema, "config: eval_thresholds entries must be numbers");
      }
      cfg.eval_thresholds.push_back(t.get<double>());
    }
  }
  if (const auto it = root.find("synthetic"); it != root.end()) {
    cfg.synthetic.n_images =
        get_integer(*it, "n_images", cfg.synthetic.n_images);
    cfg.synthetic.n_classes = static_cast<int>(
        get_integer(*it, "n_classes", cfg.synthetic.n_classes));
    cfg.synthetic.noise = get_number(*it, "noise", cfg.synthetic.noise);
  }
  if (const auto it = root.find("train"); it != root.end()) {
    cfg.train.retrain_steps =
        get_integer(*it, "retrain_steps", cfg.train.retrain_steps);
    cfg.train.retrain_step_size =
        get_number(*it, "retrain_step_size", cfg.train.retrain_step_size);
    cfg.train.ssod_steps = get_integer(*it, "ssod_steps", cfg.train.ssod_steps);
    cfg.train.ssod_step_size =
        get_number(*it, "ssod_step_size", cfg.train.ssod_step_size);
    cfg.train.labeled_batch =
        get_integer(*it, "labeled_batch", cfg.train.labeled_batch);
    cfg.train.unlabeled_batch =
        get_integer(*it, "unlabeled_batch", cfg.train.unlabeled_batch);
  }
}

}  // namespace

PipelineConfig parse_pipeline_config(const std::string& json_text,
                                     const std::string& fallback_preset) {
  json root = json::parse(json_text, nullptr, false);
  if (root.is_discarded()) fail(ErrorKind::kParse, "malformed config JSON");
  if (!root.is_object()) fail(ErrorKind::kSchema, "config: expected an object");

  std::string preset = fallback_preset.empty() ? "synthetic" : fallback_preset;
  if (const auto it = root.find("preset"); it != root.end()) {
    if (!it->is_string()) fail(ErrorKind::kSchema, "config: preset must be a string");
    preset = it->get<std::string>();
  }
  PipelineConfig cfg = preset_config(preset);
  overlay(cfg, root);
  return cfg;
}

PipelineConfig apply_config_overrides(PipelineConfig base,
                                      const std::string& json_text) {
  json root = json::parse(json_text, nullptr, false);
  if (root.is_discarded()) fail(ErrorKind::kParse, "malformed config JSON");
  overlay(base, root);
  return base;
}

PipelineConfig load_pipeline_config(const std::string& path,
                                    const std::string& fallback_preset) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) fail(ErrorKind::kIo, "read failed: " + path);
  return parse_pipeline_config(buf.str(), fallback_preset);
}

}  // namespace sos
