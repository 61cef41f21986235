#pragma once

#include "winmatch/conv.hpp"
#include "winmatch/tensor.hpp"

namespace winmatch {

// Describes one window partition of an h x w patch grid: square windows of
// `side` patches arranged on a grid_h x grid_w grid, with `top_k` windows
// gathered per query window during attention.
struct WindowContext {
  int side = 0;
  int grid_h = 0;
  int grid_w = 0;
  int top_k = 0;

  int windows() const { return grid_h * grid_w; }
  int patches_per_window() const { return side * side; }

  // Validates divisibility of (h, w) by `side` and 1 <= top_k <= windows.
  static WindowContext make(int h, int w, int side, int top_k);
};

// Window-partitioned features: data is {windows, side*side, c}.
struct WindowedFeatures {
  Tensor data;
  WindowContext ctx;
};

// Per-query-window top-k neighbour windows, each row sorted by descending
// similarity (ties resolved toward the lower window index).
struct TopKIndex {
  int k = 0;
  std::vector<int> flat;  // windows * k entries

  const int* row(int window) const { return flat.data() + static_cast<std::size_t>(window) * k; }
  bool contains(int window, int candidate) const;
};

// Keys/values a query window attends to: the gathered fine entries of its
// top-k windows followed by the per-window summaries of every window.
struct AugmentedKV {
  Tensor keys;    // {top_k * side^2 + windows, c}
  Tensor values;  // same shape as keys
};

// Learned parameters of one attention block.
struct AttentionParams {
  Tensor wq, bq, wk, bk, wv, bv;        // per-position q/k/v maps, {c, c} + {c}
  Tensor wo, bo;                        // output projection on the spatial branch
  Tensor wqc, bqc, wkc, bkc, wvc, bvc;  // channel-branch projections
  Tensor alpha_s, alpha_c;              // learned branch gates (scalars)
  MbconvParams mb;                      // residual tail

  static AttentionParams init(int c, Rng& rng);
  // Identity q/k/v and output maps, zero channel branch and tail; useful in
  // tests that need the raw attention arithmetic.
  static AttentionParams identity(int c);
  std::vector<Tensor> parameters() const;
};

struct QkvProjection {
  Tensor q, k, v;  // each {h, w, c}
};

// q from x1; k and v from x2. Maps are per-position linear.
QkvProjection project_qkv(const Tensor& x1, const Tensor& x2, const AttentionParams& p);

// Rearranges {h, w, c} into {windows, side^2, c}; lossless permutation.
WindowedFeatures window_partition(const Tensor& f, const WindowContext& ctx);
WindowedFeatures window_partition(const Tensor& f, int side);

// Exact inverse of window_partition back to {h, w, c}.
Tensor window_reverse(const WindowedFeatures& wf, int h, int w);

// Mean over each window's patches: {windows, c}.
Tensor window_average(const WindowedFeatures& wf);

// Summary similarity q_bar . k_bar^T: {windows, windows}.
Tensor window_similarity(const Tensor& q_summary, const Tensor& k_summary);

// Row-wise top-k of the summary similarity.
TopKIndex select_top_k(const Tensor& similarity, int top_k);

// Fine features of the query window's top-k partners: {top_k * side^2, c}.
Tensor gather_window_features(const WindowedFeatures& wf, const TopKIndex& idx,
                              int query_window);

AugmentedKV build_kv(const WindowedFeatures& keys, const WindowedFeatures& values,
                     const Tensor& key_summary, const Tensor& value_summary,
                     const TopKIndex& idx, int query_window);

// Scaled dot-product attention of q rows over (K, V) rows. The logits are
// divided by sqrt(c) and then by `temperature` inside the softmax.
Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, double temperature);

// Window attention with per-window top-k key/value augmentation. Queries come
// from x1, keys/values from x2; output has the shape of x1.
Tensor top_k_window_attention(const Tensor& x1, const Tensor& x2,
                              const WindowContext& ctx, const AttentionParams& p,
                              double temperature);

// Full block: gated sum of the windowed spatial branch and a channel
// attention branch, followed by a residual inverted-bottleneck tail.
Tensor attention_block(const Tensor& x1, const Tensor& x2, const WindowContext& ctx,
                       const AttentionParams& p, double temperature);

}  // namespace winmatch
