#include "winmatch/matcher.hpp"

#include <cmath>

#include "winmatch/model.hpp"

namespace winmatch {

StageSchedule interaction_schedule(int num_stages) {
  if (num_stages < 1) throw ParamError("interaction_schedule: need at least one stage");
  if (num_stages > 15) throw ParamError("interaction_schedule: stage count too large");
  StageSchedule s;
  for (int m = 0; m < num_stages; ++m)
    s.push_back({m, 1 << (2 * m), 1 << m});
  return s;
}

int effective_stage_count(int requested, int grid_side) {
  if (requested < 1) throw ParamError("stage count must be at least 1");
  int count = 0;
  for (int m = 0; m < requested; ++m) {
    const int windows_per_side = 1 << m;
    if (grid_side % windows_per_side) break;
    if (grid_side / windows_per_side < 1) break;
    ++count;
  }
  if (count == 0) throw PartitionError("patch grid side " + std::to_string(grid_side) +
                                       " does not admit any interaction stage");
  return count;
}

EncoderParams EncoderParams::init(int num_stages, int c, Rng& rng) {
  EncoderParams p;
  for (int m = 0; m < num_stages; ++m) {
    StageParams sp;
    sp.self_attn = AttentionParams::init(c, rng);
    sp.cross_attn = AttentionParams::init(c, rng);
    p.stages.push_back(std::move(sp));
  }
  return p;
}

std::vector<Tensor> EncoderParams::parameters() const {
  std::vector<Tensor> out;
  for (const auto& sp : stages) {
    for (const Tensor& t : sp.self_attn.parameters()) out.push_back(t);
    for (const Tensor& t : sp.cross_attn.parameters()) out.push_back(t);
  }
  return out;
}

std::pair<Tensor, Tensor> encode(const Tensor& fa, const Tensor& fb,
                                 const StageSchedule& schedule,
                                 const EncoderParams& params, double temperature,
                                 const PipelineConfig* cfg) {
  if (fa.shape != fb.shape)
    throw ShapeError("encode: feature grids must share extents, " + shape_str(fa.shape) +
                     " vs " + shape_str(fb.shape));
  if (params.stages.size() < schedule.size())
    throw ParamError("encode: schedule has more stages than the encoder provides");
  const int hp = fa.shape[0], wp = fa.shape[1];

  Tensor a = fa, b = fb;
  for (const Stage& st : schedule) {
    const int per_side = 1 << st.index;
    if (hp % per_side || wp % per_side || hp / per_side != wp / per_side)
      throw PartitionError("encode: stage " + std::to_string(st.index) +
                           " window grid does not tile patch grid (" +
                           std::to_string(hp) + ", " + std::to_string(wp) + ")");
    const int side = hp / per_side;
    const int top_k = cfg ? cfg->resolve_top_k(st.index, st.num_windows)
                          : std::min(st.top_k, st.num_windows);
    WindowContext ctx = WindowContext::make(hp, wp, side, top_k);
    const EncoderParams::StageParams& sp = params.stages[st.index];

    Tensor a_self = attention_block(a, a, ctx, sp.self_attn, temperature);
    Tensor b_self = attention_block(b, b, ctx, sp.self_attn, temperature);
    Tensor a_cross = attention_block(a_self, b_self, ctx, sp.cross_attn, temperature);
    Tensor b_cross = attention_block(b_self, a_self, ctx, sp.cross_attn, temperature);
    a = a_cross;
    b = b_cross;
  }
  return {a, b};
}

Tensor patch_confidence(const Tensor& ga, const Tensor& gb, double temperature) {
  if (ga.rank() != 3 || gb.rank() != 3 || ga.shape[2] != gb.shape[2])
    throw ShapeError("patch_confidence: descriptor grids disagree, " + shape_str(ga.shape) +
                     " vs " + shape_str(gb.shape));
  if (!(temperature > 0.0)) throw ParamError("patch_confidence: temperature must be positive");
  const int na = ga.shape[0] * ga.shape[1];
  const int nb = gb.shape[0] * gb.shape[1];
  Tensor a = reshape(ga, {na, ga.shape[2]});
  Tensor b = reshape(gb, {nb, gb.shape[2]});
  Tensor scores = matmul(a, transpose(b));
  Tensor rows = softmax_rows(scores, temperature);
  Tensor cols = transpose(softmax_rows(transpose(scores), temperature));
  return mul(rows, cols);
}

std::vector<CoarseMatch> mutual_nn_select(const Tensor& confidence, double threshold) {
  if (confidence.rank() != 2) throw ShapeError("mutual_nn_select: confidence must be 2-D");
  if (threshold < 0.0) throw ParamError("mutual_nn_select: threshold must be non-negative");
  const int na = confidence.shape[0], nb = confidence.shape[1];

  std::vector<int> row_best(na, 0);
  for (int i = 0; i < na; ++i)
    for (int j = 1; j < nb; ++j)
      if (confidence.at(i, j) > confidence.at(i, row_best[i])) row_best[i] = j;
  std::vector<int> col_best(nb, 0);
  for (int j = 0; j < nb; ++j)
    for (int i = 1; i < na; ++i)
      if (confidence.at(i, j) > confidence.at(col_best[j], j)) col_best[j] = i;

  std::vector<CoarseMatch> out;
  for (int i = 0; i < na; ++i) {
    const int j = row_best[i];
    const double conf = confidence.at(i, j);
    if (col_best[j] == i && conf >= threshold) out.push_back({i, j, conf});
  }
  return out;
}

FineRefinement refine_match(const Tensor& fine_a, const Tensor& fine_b, int a_row,
                            int a_col, int b_row, int b_col, int window) {
  if (window < 1 || window % 2 == 0)
    throw ParamError("refine_match: window must be odd and positive");
  if (fine_a.rank() != 3 || fine_b.rank() != 3 || fine_a.shape[2] != fine_b.shape[2])
    throw ShapeError("refine_match: fine grids disagree");
  const int ha = fine_a.shape[0], wa = fine_a.shape[1];
  const int hb = fine_b.shape[0], wb = fine_b.shape[1];
  const int c = fine_a.shape[2];
  const int m = window / 2;

  FineRefinement fr;
  if (a_row < m || a_col < m || a_row >= ha - m || a_col >= wa - m) return fr;
  if (b_row < m || b_col < m || b_row >= hb - m || b_col >= wb - m) return fr;

  // Center descriptor of A against every cell of B's window.
  Tensor a_flat = reshape(fine_a, {ha * wa, c});
  Tensor b_flat = reshape(fine_b, {hb * wb, c});
  Tensor query = gather_rows(a_flat, {a_row * wa + a_col});
  std::vector<int> cells;
  cells.reserve(static_cast<std::size_t>(window) * window);
  for (int dy = -m; dy <= m; ++dy)
    for (int dx = -m; dx <= m; ++dx)
      cells.push_back((b_row + dy) * wb + (b_col + dx));
  Tensor neigh = gather_rows(b_flat, cells);

  Tensor logits = scale(matmul(query, transpose(neigh)), 1.0 / std::sqrt(double(c)));
  Tensor heat = softmax_rows(logits, 1.0);  // {1, window^2}

  // Expected cell offset within the window, in fine cells.
  const int cells_n = window * window;
  Tensor pos_x = Tensor::zeros({1, cells_n});
  Tensor pos_y = Tensor::zeros({1, cells_n});
  for (int r = 0; r < window; ++r)
    for (int q = 0; q < window; ++q) {
      pos_y.at(0, r * window + q) = r;
      pos_x.at(0, r * window + q) = q;
    }
  Tensor ex = sum_all(mul(heat, pos_x));
  Tensor ey = sum_all(mul(heat, pos_y));

  // Spread: covariance trace around the expectation, converted to px^2
  // (fine cells are 2 px wide).
  const double exv = ex.value(), eyv = ey.value();
  double var = 0.0;
  for (int r = 0; r < window; ++r)
    for (int q = 0; q < window; ++q) {
      const double p = heat.at(0, r * window + q);
      var += p * ((r - eyv) * (r - eyv) + (q - exv) * (q - exv));
    }

  // Window origin in fine cells -> pixel coordinates. A fine cell k spans
  // [2k, 2k+2) px, so its center is 2k + 1.
  const double origin_x = b_col - m, origin_y = b_row - m;
  fr.ok = true;
  fr.bx = scale(add(ex, Tensor::scalar(origin_x + 0.5)), 2.0);
  fr.by = scale(add(ey, Tensor::scalar(origin_y + 0.5)), 2.0);
  fr.sigma2 = var * 4.0;
  fr.ax = 2.0 * a_col + 1.0;
  fr.ay = 2.0 * a_row + 1.0;
  return fr;
}

MatchSet pixel_refine(const std::vector<CoarseMatch>& coarse, const Tensor& fine_a,
                      const Tensor& fine_b, int coarse_grid_w, int window) {
  MatchSet out;
  out.coarse = coarse;
  if (coarse.empty()) return out;
  if (coarse_grid_w < 1) throw ParamError("pixel_refine: invalid coarse grid width");
  // Patches are 8 px, fine cells 2 px: each patch covers a 4x4 block of fine
  // cells; anchor at the block's center cell.
  const int ratio = 4;
  NoGradGuard ng;
  for (const CoarseMatch& cm : coarse) {
    const int ar = cm.a / coarse_grid_w, ac = cm.a % coarse_grid_w;
    const int br = cm.b / coarse_grid_w, bc = cm.b % coarse_grid_w;
    FineRefinement fr = refine_match(fine_a, fine_b, ar * ratio + ratio / 2,
                                     ac * ratio + ratio / 2, br * ratio + ratio / 2,
                                     bc * ratio + ratio / 2, window);
    if (!fr.ok) {
      ++out.dropped_at_margin;
      continue;
    }
    out.fine.push_back(
        {fr.ax, fr.ay, fr.bx.value(), fr.by.value(), cm.confidence, fr.sigma2});
  }
  return out;
}

Tensor handcrafted_coarse(const Image& im) {
  if (im.h % 8 || im.w % 8)
    throw PartitionError("handcrafted_coarse: extents must be multiples of 8");
  const int hp = im.h / 8, wp = im.w / 8, c = 64;
  Tensor out = Tensor::zeros({hp, wp, c});
  for (int r = 0; r < hp; ++r)
    for (int q = 0; q < wp; ++q) {
      double mean = 0.0;
      for (int dy = 0; dy < 8; ++dy)
        for (int dx = 0; dx < 8; ++dx) mean += im.at(r * 8 + dy, q * 8 + dx);
      mean /= 64.0;
      double norm = 0.0;
      for (int dy = 0; dy < 8; ++dy)
        for (int dx = 0; dx < 8; ++dx) {
          const double v = im.at(r * 8 + dy, q * 8 + dx) - mean;
          out.at(r, q, dy * 8 + dx) = v;
          norm += v * v;
        }
      norm = std::sqrt(norm) + 1e-12;
      for (int a = 0; a < c; ++a) out.at(r, q, a) /= norm;
    }
  return out;
}

Tensor handcrafted_fine(const Image& im) {
  if (im.h % 2 || im.w % 2)
    throw PartitionError("handcrafted_fine: extents must be even");
  const int hf = im.h / 2, wf = im.w / 2, c = 4;
  Tensor out = Tensor::zeros({hf, wf, c});
  for (int r = 0; r < hf; ++r)
    for (int q = 0; q < wf; ++q) {
      double mean = 0.0;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) mean += im.at(r * 2 + dy, q * 2 + dx);
      mean /= 4.0;
      double norm = 0.0;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          const double v = im.at(r * 2 + dy, q * 2 + dx) - mean;
          out.at(r, q, dy * 2 + dx) = v;
          norm += v * v;
        }
      norm = std::sqrt(norm) + 1e-12;
      for (int a = 0; a < c; ++a) out.at(r, q, a) /= norm;
    }
  return out;
}

MatchSet match_pipeline(const Image& a, const Image& b, const PipelineConfig& cfg,
                        const Model* model) {
  cfg.validate();
  if (a.h != b.h || a.w != b.w)
    throw ShapeError("match_pipeline: images must share extents");
  if (a.h % 16 || a.w % 16)
    throw PartitionError("match_pipeline: extents must be multiples of 16");
  if (a.h != a.w)
    throw ParamError("match_pipeline: the staged schedule requires square images");

  NoGradGuard ng;
  Tensor ga, gb, fine_a, fine_b;
  if (cfg.features == "handcrafted") {
    ga = handcrafted_coarse(a);
    gb = handcrafted_coarse(b);
    fine_a = handcrafted_fine(a);
    fine_b = handcrafted_fine(b);
  } else if (cfg.features == "learned") {
    if (!model) throw ParamError("match_pipeline: learned mode requires a model");
    auto to_tensor = [](const Image& im) {
      Tensor t = Tensor::from({im.h, im.w, 1}, im.px);
      return t;
    };
    PyramidFeatures pa = stem_forward(to_tensor(a), model->stem);
    PyramidFeatures pb = stem_forward(to_tensor(b), model->stem);
    const int grid_side = a.h / 8;
    StageSchedule schedule =
        interaction_schedule(effective_stage_count(cfg.stages, grid_side));
    if (static_cast<int>(model->encoder.stages.size()) < static_cast<int>(schedule.size()))
      throw ParamError("match_pipeline: model has fewer encoder stages than the schedule");
    auto [ea, eb] = encode(pa.eighth, pb.eighth, schedule, model->encoder,
                           cfg.attn_temperature, &cfg);
    ga = ea;
    gb = eb;
    fine_a = pa.half;
    fine_b = pb.half;
  } else {
    throw ParamError("match_pipeline: unknown feature mode '" + cfg.features + "'");
  }

  Tensor conf = patch_confidence(ga, gb, cfg.match_temperature);
  std::vector<CoarseMatch> coarse = mutual_nn_select(conf, cfg.match_threshold);
  return pixel_refine(coarse, fine_a, fine_b, ga.shape[1], cfg.fine_window);
}

}  // namespace winmatch
