#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace winmatch {

// Pipeline configuration. The JSON representation mirrors the field names
// exactly; unknown keys are rejected so typos cannot silently change runs.
struct PipelineConfig {
  std::uint64_t seed = 7;
  int stages = 4;                         // requested interaction stages
  std::string topk_schedule = "auto";     // "auto" or "fixed:<k>"
  std::string features = "learned";      // "learned" or "handcrafted"
  std::vector<int> channels = {8, 16, 32, 64};
  double attn_temperature = 1.0;          // softmax temperature inside attention
  double match_temperature = 0.1;         // dual-softmax temperature
  double match_threshold = 0.2;           // mutual-NN confidence floor
  int fine_window = 5;                    // refinement window side (odd)
  double lambda1 = 1.0;                   // window assignment loss weight
  double lambda2 = 1.0;                   // patch match loss weight
  double lambda3 = 0.25;                  // subpixel regression loss weight
  double learning_rate = 1e-3;
  int ransac_iters = 1000;
  double ransac_inlier_px = 3.0;

  void validate() const;
  // Top-k for a stage with n windows under this config's schedule.
  int resolve_top_k(int stage_index, int num_windows) const;
};

PipelineConfig load_config(const std::string& path);
std::string config_to_json(const PipelineConfig& cfg);  // stable field order
PipelineConfig config_from_json_text(const std::string& text);

}  // namespace winmatch
