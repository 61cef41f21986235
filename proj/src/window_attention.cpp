#include "winmatch/window_attention.hpp"

#include <cmath>

namespace winmatch {

namespace {

// Row permutation taking flattened {h, w} order into window-major order:
// windows scan row-major over the window grid, patches row-major inside
// each window.
std::vector<int> partition_index(int h, int w, int side) {
  std::vector<int> perm(static_cast<std::size_t>(h) * w);
  std::size_t out = 0;
  for (int wr = 0; wr < h / side; ++wr)
    for (int wc = 0; wc < w / side; ++wc)
      for (int pr = 0; pr < side; ++pr)
        for (int pc = 0; pc < side; ++pc)
          perm[out++] = (wr * side + pr) * w + (wc * side + pc);
  return perm;
}

void check_map3(const Tensor& f, const char* op) {
  if (f.rank() != 3)
    throw ShapeError(std::string(op) + ": expected {h, w, c}, got " + shape_str(f.shape));
}

}  // namespace

WindowContext WindowContext::make(int h, int w, int side, int top_k) {
  if (side <= 0) throw ParamError("window side must be positive");
  if (h % side || w % side)
    throw PartitionError("extents (" + std::to_string(h) + ", " + std::to_string(w) +
                         ") are not divisible by window side " + std::to_string(side));
  WindowContext ctx;
  ctx.side = side;
  ctx.grid_h = h / side;
  ctx.grid_w = w / side;
  ctx.top_k = top_k;
  if (top_k < 1 || top_k > ctx.windows())
    throw ParamError("top_k = " + std::to_string(top_k) + " outside [1, " +
                     std::to_string(ctx.windows()) + "]");
  return ctx;
}

bool TopKIndex::contains(int window, int candidate) const {
  const int* r = row(window);
  for (int i = 0; i < k; ++i)
    if (r[i] == candidate) return true;
  return false;
}

AttentionParams AttentionParams::init(int c, Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(c));
  AttentionParams p;
  p.wq = Tensor::randn({c, c}, rng, s, true);
  p.bq = Tensor::zeros({c}, true);
  p.wk = Tensor::randn({c, c}, rng, s, true);
  p.bk = Tensor::zeros({c}, true);
  p.wv = Tensor::randn({c, c}, rng, s, true);
  p.bv = Tensor::zeros({c}, true);
  p.wo = Tensor::randn({c, c}, rng, 0.1 * s, true);  // gentle spatial branch at init
  p.bo = Tensor::zeros({c}, true);
  p.wqc = Tensor::randn({c, c}, rng, s, true);
  p.bqc = Tensor::zeros({c}, true);
  p.wkc = Tensor::randn({c, c}, rng, s, true);
  p.bkc = Tensor::zeros({c}, true);
  p.wvc = Tensor::randn({c, c}, rng, s, true);
  p.bvc = Tensor::zeros({c}, true);
  p.alpha_s = Tensor::scalar(1.0, true);
  p.alpha_c = Tensor::scalar(0.1, true);
  p.mb = MbconvParams::init(c, c, 1, rng);
  return p;
}

AttentionParams AttentionParams::identity(int c) {
  auto eye = [c]() {
    Tensor t = Tensor::zeros({c, c});
    for (int i = 0; i < c; ++i) t.at(i, i) = 1.0;
    return t;
  };
  AttentionParams p;
  p.wq = eye();
  p.bq = Tensor::zeros({c});
  p.wk = eye();
  p.bk = Tensor::zeros({c});
  p.wv = eye();
  p.bv = Tensor::zeros({c});
  p.wo = eye();
  p.bo = Tensor::zeros({c});
  p.wqc = Tensor::zeros({c, c});
  p.bqc = Tensor::zeros({c});
  p.wkc = Tensor::zeros({c, c});
  p.bkc = Tensor::zeros({c});
  p.wvc = Tensor::zeros({c, c});
  p.bvc = Tensor::zeros({c});
  p.alpha_s = Tensor::scalar(1.0);
  p.alpha_c = Tensor::scalar(0.0);
  Rng rng(0);
  p.mb = MbconvParams::init(c, c, 1, rng);
  p.mb.zero();
  return p;
}

std::vector<Tensor> AttentionParams::parameters() const {
  return {wq,   bq,   wk,   bk,   wv,   bv,   wo,          bo,
          wqc,  bqc,  wkc,  bkc,  wvc,  bvc,  alpha_s,     alpha_c,
          mb.expand.w, mb.expand.b, mb.dw.w, mb.dw.b, mb.project.w, mb.project.b};
}

QkvProjection project_qkv(const Tensor& x1, const Tensor& x2, const AttentionParams& p) {
  check_map3(x1, "project_qkv");
  check_map3(x2, "project_qkv");
  if (x1.shape != x2.shape)
    throw ShapeError("project_qkv: inputs must share extents, " + shape_str(x1.shape) +
                     " vs " + shape_str(x2.shape));
  QkvProjection out;
  out.q = pointwise(x1, p.wq, p.bq);
  out.k = pointwise(x2, p.wk, p.bk);
  out.v = pointwise(x2, p.wv, p.bv);
  return out;
}

WindowedFeatures window_partition(const Tensor& f, const WindowContext& ctx) {
  check_map3(f, "window_partition");
  const int h = f.shape[0], w = f.shape[1], c = f.shape[2];
  if (h != ctx.grid_h * ctx.side || w != ctx.grid_w * ctx.side)
    throw PartitionError("window_partition: map " + shape_str(f.shape) +
                         " does not match window context (side " +
                         std::to_string(ctx.side) + ")");
  const std::vector<int> perm = partition_index(h, w, ctx.side);
  Tensor rows = gather_rows(reshape(f, {h * w, c}), perm);
  WindowedFeatures wf;
  wf.data = reshape(rows, {ctx.windows(), ctx.patches_per_window(), c});
  wf.ctx = ctx;
  return wf;
}

WindowedFeatures window_partition(const Tensor& f, int side) {
  check_map3(f, "window_partition");
  return window_partition(f, WindowContext::make(f.shape[0], f.shape[1], side, 1));
}

Tensor window_reverse(const WindowedFeatures& wf, int h, int w) {
  const Tensor& t = wf.data;
  if (t.rank() != 3) throw ShapeError("window_reverse: expected {n, s^2, c}");
  const int c = t.shape[2];
  if (static_cast<std::size_t>(h) * w != static_cast<std::size_t>(t.shape[0]) * t.shape[1])
    throw ShapeError("window_reverse: " + shape_str(t.shape) + " cannot fill (" +
                     std::to_string(h) + ", " + std::to_string(w) + ")");
  const std::vector<int> perm = partition_index(h, w, wf.ctx.side);
  std::vector<int> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = static_cast<int>(i);
  Tensor rows = gather_rows(reshape(t, {h * w, c}), inv);
  return reshape(rows, {h, w, c});
}

Tensor window_average(const WindowedFeatures& wf) { return mean_axis(wf.data, 1); }

Tensor window_similarity(const Tensor& q_summary, const Tensor& k_summary) {
  if (q_summary.rank() != 2 || k_summary.rank() != 2 ||
      q_summary.shape[1] != k_summary.shape[1])
    throw ShapeError("window_similarity: " + shape_str(q_summary.shape) + " vs " +
                     shape_str(k_summary.shape));
  return matmul(q_summary, transpose(k_summary));
}

TopKIndex select_top_k(const Tensor& similarity, int top_k) {
  if (similarity.rank() != 2) throw ShapeError("select_top_k: similarity must be 2-D");
  const int n = similarity.shape[0], m = similarity.shape[1];
  if (top_k < 1 || top_k > m)
    throw ParamError("select_top_k: top_k = " + std::to_string(top_k) + " outside [1, " +
                     std::to_string(m) + "]");
  TopKIndex idx;
  idx.k = top_k;
  idx.flat.reserve(static_cast<std::size_t>(n) * top_k);
  std::vector<double> row(m);
  for (int r = 0; r < n; ++r) {
    for (int cidx = 0; cidx < m; ++cidx) row[cidx] = similarity.at(r, cidx);
    for (int v : topk_desc(row, top_k)) idx.flat.push_back(v);
  }
  return idx;
}

Tensor gather_window_features(const WindowedFeatures& wf, const TopKIndex& idx,
                              int query_window) {
  const int n = wf.ctx.windows(), ppw = wf.ctx.patches_per_window(), c = wf.data.shape[2];
  if (query_window < 0 || query_window >= n)
    throw ParamError("gather_window_features: query window out of range");
  std::vector<int> rows;
  rows.reserve(static_cast<std::size_t>(idx.k) * ppw);
  const int* sel = idx.row(query_window);
  for (int t = 0; t < idx.k; ++t) {
    if (sel[t] < 0 || sel[t] >= n)
      throw ContractError("gather_window_features: selected window out of range");
    for (int l = 0; l < ppw; ++l) rows.push_back(sel[t] * ppw + l);
  }
  return gather_rows(reshape(wf.data, {n * ppw, c}), rows);
}

AugmentedKV build_kv(const WindowedFeatures& keys, const WindowedFeatures& values,
                     const Tensor& key_summary, const Tensor& value_summary,
                     const TopKIndex& idx, int query_window) {
  AugmentedKV kv;
  kv.keys = concat({gather_window_features(keys, idx, query_window), key_summary}, 0);
  kv.values = concat({gather_window_features(values, idx, query_window), value_summary}, 0);
  if (kv.keys.shape != kv.values.shape)
    throw ShapeError("build_kv: key/value row mismatch");
  return kv;
}

Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, double temperature) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.shape[1] != k.shape[1] ||
      k.shape != v.shape)
    throw ShapeError("attend: q " + shape_str(q.shape) + ", k " + shape_str(k.shape) +
                     ", v " + shape_str(v.shape));
  const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(q.shape[1]));
  Tensor logits = scale(matmul(q, transpose(k)), inv_sqrt_c);
  return matmul(softmax_rows(logits, temperature), v);
}

Tensor top_k_window_attention(const Tensor& x1, const Tensor& x2,
                              const WindowContext& ctx, const AttentionParams& p,
                              double temperature) {
  check_map3(x1, "top_k_window_attention");
  const int h = x1.shape[0], w = x1.shape[1], c = x1.shape[2];
  if (h != ctx.grid_h * ctx.side || w != ctx.grid_w * ctx.side)
    throw PartitionError("top_k_window_attention: map " + shape_str(x1.shape) +
                         " does not tile with side " + std::to_string(ctx.side));

  QkvProjection qkv = project_qkv(x1, x2, p);
  WindowedFeatures qw = window_partition(qkv.q, ctx);
  WindowedFeatures kw = window_partition(qkv.k, ctx);
  WindowedFeatures vw = window_partition(qkv.v, ctx);
  Tensor q_bar = window_average(qw);
  Tensor k_bar = window_average(kw);
  Tensor v_bar = window_average(vw);
  Tensor sim = window_similarity(q_bar, k_bar);
  TopKIndex idx = select_top_k(sim, ctx.top_k);

  const int n = ctx.windows(), ppw = ctx.patches_per_window();
  std::vector<Tensor> outputs;
  outputs.reserve(n);
  for (int i = 0; i < n; ++i) {
    AugmentedKV kv = build_kv(kw, vw, k_bar, v_bar, idx, i);
    Tensor qi = reshape(narrow(qw.data, 0, i, 1), {ppw, c});
    outputs.push_back(attend(qi, kv.keys, kv.values, temperature));
  }
  WindowedFeatures owf;
  owf.data = reshape(concat(outputs, 0), {n, ppw, c});
  owf.ctx = ctx;
  return window_reverse(owf, h, w);
}

Tensor attention_block(const Tensor& x1, const Tensor& x2, const WindowContext& ctx,
                       const AttentionParams& p, double temperature) {
  check_map3(x1, "attention_block");
  const int h = x1.shape[0], w = x1.shape[1], c = x1.shape[2];

  // Spatial branch: windowed top-k attention, then the output projection.
  Tensor vs = pointwise(top_k_window_attention(x1, x2, ctx, p, temperature), p.wo, p.bo);

  // Channel branch: per-channel descriptors correlated across the two maps
  // (spatial mean of products), softmax over the c x c similarity, applied to
  // the channel-stacked values.
  const int positions = h * w;
  Tensor xf1 = reshape(x1, {positions, c});
  Tensor xf2 = reshape(x2, {positions, c});
  Tensor qc = add_bias_rows(matmul(xf1, p.wqc), p.bqc);
  Tensor kc = add_bias_rows(matmul(xf2, p.wkc), p.bkc);
  Tensor vc = add_bias_rows(matmul(xf2, p.wvc), p.bvc);
  Tensor chan_sim = scale(matmul(transpose(qc), kc), 1.0 / positions);
  Tensor chan_attn = softmax_rows(chan_sim, 1.0);
  Tensor vc_mixed = reshape(matmul(vc, transpose(chan_attn)), {h, w, c});

  Tensor y = add(x1, add(smul(vs, p.alpha_s), smul(vc_mixed, p.alpha_c)));
  return add(y, mbconv(y, p.mb));
}

}  // namespace winmatch
