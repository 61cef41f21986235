#include "winmatch/loss.hpp"

#include <algorithm>
#include <cmath>

namespace winmatch {

namespace {

// Maps a patch index on a grid_h x grid_w patch grid to its window index.
int patch_window(int patch, int grid_w, const WindowContext& ctx) {
  const int r = patch / grid_w;
  const int c = patch % grid_w;
  return (r / ctx.side) * ctx.grid_w + (c / ctx.side);
}

std::vector<int> window_patch_list(int window, int grid_w, const WindowContext& ctx) {
  const int wr = window / ctx.grid_w;
  const int wc = window % ctx.grid_w;
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(ctx.side) * ctx.side);
  for (int dy = 0; dy < ctx.side; ++dy)
    for (int dx = 0; dx < ctx.side; ++dx)
      out.push_back((wr * ctx.side + dy) * grid_w + (wc * ctx.side + dx));
  return out;
}

}  // namespace

Tensor window_assignment_logprob(const Tensor& similarity, const TopKIndex& idx,
                                 int query_window, int ref_window) {
  if (similarity.rank() != 2 || similarity.shape[0] != similarity.shape[1])
    throw ShapeError("window_assignment_logprob: similarity must be square, got " +
                     shape_str(similarity.shape));
  const int n = similarity.shape[0];
  if (query_window < 0 || query_window >= n || ref_window < 0 || ref_window >= n)
    throw ParamError("window_assignment_logprob: window index out of range");
  if (idx.k < 1 || static_cast<int>(idx.flat.size()) != n * idx.k)
    throw ShapeError("window_assignment_logprob: top-k index does not cover the grid");

  Tensor row = reshape(gather_rows(similarity, {query_window}), {n});
  Tensor log_z = logsumexp_all(row);

  if (idx.contains(query_window, ref_window)) {
    Tensor logit = sum_all(gather1d(row, {ref_window}));
    return sub(logit, log_z);
  }

  // "None of the kept windows" bucket: log-sum-exp of the left-out entries.
  std::vector<char> kept(n, 0);
  const int* kr = idx.row(query_window);
  for (int t = 0; t < idx.k; ++t) kept[kr[t]] = 1;
  std::vector<int> rest;
  rest.reserve(n - idx.k);
  for (int w = 0; w < n; ++w)
    if (!kept[w]) rest.push_back(w);
  if (rest.empty())
    throw ContractError("window_assignment_logprob: reference window missing from a "
                        "full top-k row");
  Tensor bucket = logsumexp_all(gather1d(row, rest));
  return sub(bucket, log_z);
}

Tensor patch_match_logprob(const Tensor& confidence,
                           const std::vector<int>& window_patches, int i, int j) {
  if (confidence.rank() != 2)
    throw ShapeError("patch_match_logprob: confidence must be 2-D");
  const int na = confidence.shape[0], nb = confidence.shape[1];
  if (i < 0 || i >= na || j < 0 || j >= nb)
    throw ParamError("patch_match_logprob: patch index out of range");
  if (window_patches.empty())
    throw ParamError("patch_match_logprob: candidate list is empty");
  bool listed = false;
  for (int p : window_patches) {
    if (p < 0 || p >= nb)
      throw ParamError("patch_match_logprob: candidate index out of range");
    listed = listed || p == j;
  }
  if (!listed)
    throw ContractError("patch_match_logprob: target patch not among the candidates");

  Tensor row = reshape(gather_rows(confidence, {i}), {nb});
  Tensor numer = sum_all(gather1d(row, {j}));
  Tensor denom = sum_all(gather1d(row, window_patches));
  return log_elem(div(numer, denom));
}

std::pair<Tensor, Tensor> window_patch_loss(const Tensor& similarity,
                                            const TopKIndex& idx,
                                            const Tensor& confidence,
                                            const GroundTruth& gt,
                                            const WindowContext& ctx, int grid_w) {
  if (gt.coarse.empty())
    throw ParamError("window_patch_loss: no supervision pairs");
  const int patches = ctx.windows() * ctx.patches_per_window();
  if (confidence.rank() != 2 || confidence.shape[0] != patches ||
      confidence.shape[1] != patches)
    throw ShapeError("window_patch_loss: confidence grid does not match the window "
                     "layout, got " + shape_str(confidence.shape));

  Tensor assign_sum = Tensor::scalar(0.0);
  Tensor match_sum = Tensor::scalar(0.0);
  for (const auto& [pa, pb] : gt.coarse) {
    if (pa < 0 || pa >= patches || pb < 0 || pb >= patches)
      throw ParamError("window_patch_loss: supervision patch index out of range");
    const int wa = patch_window(pa, grid_w, ctx);
    const int wb = patch_window(pb, grid_w, ctx);
    assign_sum = add(assign_sum, window_assignment_logprob(similarity, idx, wa, wb));
    if (idx.contains(wa, wb)) {
      std::vector<int> cands = window_patch_list(wb, grid_w, ctx);
      match_sum = add(match_sum, patch_match_logprob(confidence, cands, pa, pb));
    }
  }
  const double inv = -1.0 / static_cast<double>(gt.coarse.size());
  return {scale(assign_sum, inv), scale(match_sum, inv)};
}

PixelLossResult pixel_loss(const std::vector<FinePrediction>& predictions,
                           const std::vector<std::array<double, 2>>& targets,
                           double eps) {
  if (predictions.size() != targets.size())
    throw ShapeError("pixel_loss: prediction/target count mismatch");
  if (!(eps > 0.0)) throw ParamError("pixel_loss: eps must be positive");
  if (predictions.empty()) return {Tensor::scalar(0.0), true};

  Tensor sum = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const FinePrediction& p = predictions[i];
    const double weight = 1.0 / std::max(p.sigma2, eps);
    Tensor dx = sub(p.bx, Tensor::scalar(targets[i][0]));
    Tensor dy = sub(p.by, Tensor::scalar(targets[i][1]));
    Tensor sq = add(mul(dx, dx), mul(dy, dy));
    sum = add(sum, scale(sq, weight));
  }
  return {scale(sum, 1.0 / static_cast<double>(predictions.size())), false};
}

Tensor total_loss(const Tensor& l_window, const Tensor& l_patch, const Tensor& l_pixel,
                  const LossWeights& w) {
  return add(add(scale(l_window, w.lambda1), scale(l_patch, w.lambda2)),
             scale(l_pixel, w.lambda3));
}

}  // namespace winmatch
