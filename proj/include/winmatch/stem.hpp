#pragma once

#include <vector>

#include "winmatch/conv.hpp"

namespace winmatch {

// Residual pair of inverted bottlenecks at constant width:
// y = f + mbconv1(f); out = y + mbconv2(y).
struct MbBlockParams {
  MbconvParams m1, m2;
  static MbBlockParams init(int c, Rng& rng);
};

// Downsampling unit: a stride-2 inverted bottleneck summed with a
// max-pool + 1x1 projection path. Halves both spatial extents.
struct TransBlockParams {
  MbconvParams mb;        // stride 2, c_in -> c_out
  ConvParams pool_proj;   // {c_in, c_out}
  static TransBlockParams init(int c_in, int c_out, Rng& rng);
};

// Parameters of the convolutional pyramid. Stage i applies i residual
// blocks; channel widths are per scale: {1/2, 1/4, 1/8, 1/16}.
struct StemParams {
  std::vector<int> channels;  // four widths
  ConvParams entry;           // 3x3, 1 -> channels[0], full resolution
  NormParams entry_norm;
  TransBlockParams t2, t4, t8, t16;
  std::vector<MbBlockParams> stage1, stage2, stage3;
  ConvParams merge_proj;  // channels[3] -> channels[2], 1x1
  NormParams merge_norm;
  MbconvParams merge_mb;  // at channels[2]

  static StemParams init(const std::vector<int>& channels, Rng& rng);
  std::vector<Tensor> parameters() const;
  void zero_all();
};

struct PyramidFeatures {
  Tensor half;    // {H/2, W/2, channels[0]}
  Tensor eighth;  // {H/8, W/8, channels[2]}
};

Tensor mb_block(const Tensor& f, const MbBlockParams& p, PadMode pad = PadMode::Zero);
Tensor trans_block(const Tensor& f, const TransBlockParams& p, PadMode pad = PadMode::Zero);

// Full pyramid from a {H, W, 1} image; H and W must be multiples of 16.
// The 1/16 map is folded back into the 1/8 map (nearest upsample, channel
// projection, sum, one inverted bottleneck).
PyramidFeatures stem_forward(const Tensor& image, const StemParams& p,
                             PadMode pad = PadMode::Zero);

}  // namespace winmatch
