#pragma once

#include <utility>
#include <vector>

#include "winmatch/config.hpp"
#include "winmatch/image.hpp"
#include "winmatch/stem.hpp"
#include "winmatch/window_attention.hpp"

namespace winmatch {

struct Stage {
  int index = 0;
  int num_windows = 0;  // 4^index
  int top_k = 0;        // 2^index
};
using StageSchedule = std::vector<Stage>;

// Coarse-to-fine interaction ladder: stage m uses 4^m windows and keeps the
// top 2^m of them per query window.
StageSchedule interaction_schedule(int num_stages);

// Encoder parameters: one self- and one cross-attention block per stage,
// shared between the two images.
struct EncoderParams {
  struct StageParams {
    AttentionParams self_attn;
    AttentionParams cross_attn;
  };
  std::vector<StageParams> stages;

  static EncoderParams init(int num_stages, int c, Rng& rng);
  std::vector<Tensor> parameters() const;
};

// Interleaved self/cross attention over the schedule. Both directions update
// simultaneously, so swapping the inputs exactly swaps the outputs.
std::pair<Tensor, Tensor> encode(const Tensor& fa, const Tensor& fb,
                                 const StageSchedule& schedule,
                                 const EncoderParams& params, double temperature,
                                 const PipelineConfig* cfg = nullptr);

// Dual-softmax confidence between flattened descriptor grids:
// S[i][j] = <a_i, b_j> / temperature; P = softmax_rows(S) * softmax_cols(S).
Tensor patch_confidence(const Tensor& ga, const Tensor& gb, double temperature);

struct CoarseMatch {
  int a = 0, b = 0;
  double confidence = 0.0;
};

// Mutual nearest neighbours above the confidence floor; argmax ties resolve
// toward the smaller index.
std::vector<CoarseMatch> mutual_nn_select(const Tensor& confidence, double threshold);

struct FineMatch {
  double ax = 0, ay = 0;  // pixel coords in image A
  double bx = 0, by = 0;  // refined pixel coords in image B
  double confidence = 0.0;
  double sigma2 = 0.0;  // heatmap covariance trace, px^2
};

struct MatchSet {
  std::vector<CoarseMatch> coarse;
  std::vector<FineMatch> fine;
  int dropped_at_margin = 0;
};

// Differentiable single-pair refinement; used by both the inference wrapper
// and the training loss.
struct FineRefinement {
  bool ok = false;        // false when a window would cross the map margin
  Tensor bx, by;          // predicted pixel coords in B (scalars)
  double sigma2 = 0.0;    // heatmap spread, px^2
  double ax = 0, ay = 0;  // anchor pixel coords in A
};

// Correlates the fine descriptor at A's anchor cell with a window x window
// neighbourhood of B's anchor; softmax heatmap, expectation and spread.
// Anchors are given in fine-grid cells.
FineRefinement refine_match(const Tensor& fine_a, const Tensor& fine_b, int a_row,
                            int a_col, int b_row, int b_col, int window);

// Refines every coarse match; matches whose window would cross a margin are
// dropped and counted.
MatchSet pixel_refine(const std::vector<CoarseMatch>& coarse, const Tensor& fine_a,
                      const Tensor& fine_b, int coarse_grid_w, int window);

// Mean-normalized raw intensity descriptors, used to exercise the matching
// stack without any training: 8x8 patches at 1/8 scale, 2x2 at 1/2 scale.
Tensor handcrafted_coarse(const Image& im);
Tensor handcrafted_fine(const Image& im);

struct Model;  // defined in model.hpp

// Full pipeline: features -> (encoder) -> dual softmax -> mutual NN ->
// subpixel refinement. `model` may be null in handcrafted mode.
MatchSet match_pipeline(const Image& a, const Image& b, const PipelineConfig& cfg,
                        const Model* model);

// Largest stage count (at most `requested`) whose window grids tile a square
// patch grid of the given side.
int effective_stage_count(int requested, int grid_side);

}  // namespace winmatch
