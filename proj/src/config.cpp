#include "winmatch/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "winmatch/errors.hpp"

namespace winmatch {

namespace {

using ordered_json = nlohmann::ordered_json;

int parse_fixed_k(const std::string& schedule) {
  const std::string prefix = "fixed:";
  if (schedule.rfind(prefix, 0) != 0) return -1;
  const std::string rest = schedule.substr(prefix.size());
  if (rest.empty() || rest.find_first_not_of("0123456789") != std::string::npos)
    throw ParamError("topk_schedule: expected fixed:<positive integer>, got '" +
                     schedule + "'");
  const int k = std::stoi(rest);
  if (k < 1) throw ParamError("topk_schedule: fixed k must be at least 1");
  return k;
}

}  // namespace

void PipelineConfig::validate() const {
  if (stages < 1) throw ParamError("config: stages must be at least 1");
  if (features != "learned" && features != "handcrafted")
    throw ParamError("config: features must be 'learned' or 'handcrafted'");
  if (topk_schedule != "auto") parse_fixed_k(topk_schedule);  // throws if malformed
  if (channels.size() != 4) throw ParamError("config: channels needs four widths");
  for (int c : channels)
    if (c < 1) throw ParamError("config: channel widths must be positive");
  if (!(attn_temperature > 0)) throw ParamError("config: attn_temperature must be positive");
  if (!(match_temperature > 0)) throw ParamError("config: match_temperature must be positive");
  if (match_threshold < 0) throw ParamError("config: match_threshold must be non-negative");
  if (fine_window < 1 || fine_window % 2 == 0)
    throw ParamError("config: fine_window must be odd and positive");
  if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0)
    throw ParamError("config: loss weights must be non-negative");
  if (!(learning_rate > 0)) throw ParamError("config: learning_rate must be positive");
  if (ransac_iters < 1) throw ParamError("config: ransac_iters must be at least 1");
  if (!(ransac_inlier_px > 0))
    throw ParamError("config: ransac_inlier_px must be positive");
}

int PipelineConfig::resolve_top_k(int stage_index, int num_windows) const {
  if (stage_index < 0) throw ParamError("resolve_top_k: negative stage index");
  if (num_windows < 1) throw ParamError("resolve_top_k: need at least one window");
  if (topk_schedule == "auto") {
    if (stage_index > 30) throw ParamError("resolve_top_k: stage index too large");
    return std::min(1 << stage_index, num_windows);
  }
  return std::min(parse_fixed_k(topk_schedule), num_windows);
}

std::string config_to_json(const PipelineConfig& cfg) {
  ordered_json j;
  j["seed"] = cfg.seed;
  j["stages"] = cfg.stages;
  j["topk_schedule"] = cfg.topk_schedule;
  j["features"] = cfg.features;
  j["channels"] = cfg.channels;
  j["attn_temperature"] = cfg.attn_temperature;
  j["match_temperature"] = cfg.match_temperature;
  j["match_threshold"] = cfg.match_threshold;
  j["fine_window"] = cfg.fine_window;
  j["lambda1"] = cfg.lambda1;
  j["lambda2"] = cfg.lambda2;
  j["lambda3"] = cfg.lambda3;
  j["learning_rate"] = cfg.learning_rate;
  j["ransac_iters"] = cfg.ransac_iters;
  j["ransac_inlier_px"] = cfg.ransac_inlier_px;
  return j.dump(2) + "\n";
}

PipelineConfig config_from_json_text(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw IoError("config: top level must be an object");

  PipelineConfig cfg;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else if (key == "stages") cfg.stages = value.get<int>();
      else if (key == "topk_schedule") cfg.topk_schedule = value.get<std::string>();
      else if (key == "features") cfg.features = value.get<std::string>();
      else if (key == "channels") cfg.channels = value.get<std::vector<int>>();
      else if (key == "attn_temperature") cfg.attn_temperature = value.get<double>();
      else if (key == "match_temperature") cfg.match_temperature = value.get<double>();
      else if (key == "match_threshold") cfg.match_threshold = value.get<double>();
      else if (key == "fine_window") cfg.fine_window = value.get<int>();
      else if (key == "lambda1") cfg.lambda1 = value.get<double>();
      else if (key == "lambda2") cfg.lambda2 = value.get<double>();
      else if (key == "lambda3") cfg.lambda3 = value.get<double>();
      else if (key == "learning_rate") cfg.learning_rate = value.get<double>();
      else if (key == "ransac_iters") cfg.ransac_iters = value.get<int>();
      else if (key == "ransac_inlier_px") cfg.ransac_inlier_px = value.get<double>();
      else throw ParamError("config: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParamError(std::string("config: bad value type: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_json_text(ss.str());
}

}  // namespace winmatch
