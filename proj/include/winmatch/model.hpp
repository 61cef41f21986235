#pragma once

#include <string>
#include <utility>

#include "winmatch/config.hpp"
#include "winmatch/matcher.hpp"
#include "winmatch/stem.hpp"

namespace winmatch {

// Trainable state: the convolutional pyramid plus the staged encoder.
struct Model {
  int stages = 0;
  std::vector<int> channels;
  StemParams stem;
  EncoderParams encoder;

  // Deterministic initialization from the config seed. `stage_count` is the
  // effective schedule depth the model will be used with.
  static Model init(const PipelineConfig& cfg, int stage_count);

  // Stable enumeration used by the optimizer and the checkpoint format.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
};

// Checkpoints are a flat little-endian float64 array (values in
// named-parameter order) next to a JSON manifest of names and shapes.
void save_checkpoint(const Model& model, const std::string& bin_path,
                     const std::string& manifest_path);
Model load_checkpoint(const PipelineConfig& cfg, const std::string& bin_path,
                      const std::string& manifest_path);

}  // namespace winmatch
