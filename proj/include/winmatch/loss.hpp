#pragma once

#include <array>
#include <vector>

#include "winmatch/tensor.hpp"
#include "winmatch/window_attention.hpp"

namespace winmatch {

struct LossWeights {
  double lambda1 = 1.0;  // window assignment
  double lambda2 = 1.0;  // patch match
  double lambda3 = 0.25; // subpixel regression
};

// Supervision for one image pair. Coarse pairs are patch-index pairs on the
// 1/8 grid; fine targets are the true pixel positions in B of each coarse
// pair's anchor.
struct GroundTruth {
  std::vector<std::pair<int, int>> coarse;
  std::vector<std::array<double, 2>> fine_targets;
};

// Log-probability that query window `query_window` is assigned `ref_window`.
// The distribution is the softmax of the query's similarity row restricted
// to its top-k windows plus a bucket for "none of them", whose logit is the
// log-sum-exp of all non-top-k entries; it therefore sums to one over the
// full row. Returns the bucket's log-probability when `ref_window` is not
// among the top-k.
Tensor window_assignment_logprob(const Tensor& similarity, const TopKIndex& idx,
                                 int query_window, int ref_window);

// Log of the dual-softmax confidence P[i][j] renormalized over the candidate
// patches `window_patches` (the patches of j's window). j must be listed.
Tensor patch_match_logprob(const Tensor& confidence,
                           const std::vector<int>& window_patches, int i, int j);

// Negated means of the two log-probabilities over the ground-truth pairs.
// Pairs whose reference window fell outside the top-k contribute only the
// assignment term (their match term is log 1 = 0).
// `ctx` maps patches to windows on both grids; `grid_w` is the patch grid
// width shared by the two images.
std::pair<Tensor, Tensor> window_patch_loss(const Tensor& similarity,
                                            const TopKIndex& idx,
                                            const Tensor& confidence,
                                            const GroundTruth& gt,
                                            const WindowContext& ctx, int grid_w);

// One refined prediction entering the subpixel loss.
struct FinePrediction {
  Tensor bx, by;        // scalar tensors, pixels
  double sigma2 = 1.0;  // heatmap spread, px^2 (weight only, not differentiated)
};

struct PixelLossResult {
  Tensor value;
  bool empty = false;  // no refinable pairs; value is the zero scalar
};

// Variance-weighted mean squared subpixel error. The weights 1/sigma^2 are
// clamped below at `eps` and treated as constants.
PixelLossResult pixel_loss(const std::vector<FinePrediction>& predictions,
                           const std::vector<std::array<double, 2>>& targets,
                           double eps = 1e-6);

Tensor total_loss(const Tensor& l_window, const Tensor& l_patch, const Tensor& l_pixel,
                  const LossWeights& w);

}  // namespace winmatch
