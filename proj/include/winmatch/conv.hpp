#pragma once

#include "winmatch/tensor.hpp"

namespace winmatch {

// Feature maps are rank-3 tensors laid out {h, w, c}.

enum class PadMode { Zero, Circular };

struct ConvParams {
  Tensor w;  // pointwise: {c_in, c_out}; full 3x3: {3, 3, c_in, c_out}
  Tensor b;  // {c_out}
};

struct NormParams {
  Tensor gamma;  // {c}
  Tensor beta;   // {c}
};

// Inverted bottleneck: pointwise expand, depthwise 3x3, pointwise project,
// with activation between the convolutions. `stride` applies to the
// depthwise stage (1 keeps extents, 2 halves them).
struct MbconvParams {
  ConvParams expand;   // {c_in, c_mid}
  ConvParams dw;       // w: {3, 3, c_mid}, b: {c_mid}
  ConvParams project;  // {c_mid, c_out}
  int stride = 1;

  static MbconvParams init(int c_in, int c_out, int stride, Rng& rng,
                           int expansion = 4);
  void zero();
};

// Runs the inverted bottleneck: expand -> act -> depthwise -> act -> project.
Tensor mbconv(const Tensor& f, const MbconvParams& p, PadMode pad = PadMode::Zero);

// Full 3x3 convolution, same padding; stride 2 requires even extents.
Tensor conv3x3(const Tensor& f, const Tensor& w, const Tensor& b, int stride,
               PadMode pad);

// Depthwise 3x3 convolution, same padding; stride 2 requires even extents.
Tensor depthwise3x3(const Tensor& f, const Tensor& k, const Tensor& b,
                    int stride, PadMode pad);

// Per-position channel mixing: {h, w, c_in} -> {h, w, c_out}.
Tensor pointwise(const Tensor& f, const Tensor& w, const Tensor& b);

// 2x2 max pooling with stride 2; extents must be even.
Tensor maxpool2x2(const Tensor& f);

// Nearest-neighbour upsampling by 2 in both spatial axes.
Tensor upsample_nearest2x(const Tensor& f);

// Per-position normalization across channels with learned affine.
Tensor layer_norm_channels(const Tensor& f, const Tensor& gamma,
                           const Tensor& beta, double eps = 1e-5);

}  // namespace winmatch
