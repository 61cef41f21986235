#include "winmatch/train.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

namespace winmatch {

AdamState AdamState::init(const std::vector<Tensor>& params) {
  AdamState st;
  st.m.reserve(params.size());
  st.v.reserve(params.size());
  for (const Tensor& p : params) {
    st.m.emplace_back(p.numel(), 0.0);
    st.v.emplace_back(p.numel(), 0.0);
  }
  return st;
}

void adam_step(const std::vector<Tensor>& params, AdamState& st, double lr,
               double beta1, double beta2, double eps) {
  if (params.size() != st.m.size())
    throw ContractError("adam_step: state does not match the parameter list");
  ++st.t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& p = params[i];
    if (!p.grad) throw ContractError("adam_step: parameter without gradient storage");
    std::vector<double>& m = st.m[i];
    std::vector<double>& v = st.v[i];
    for (std::size_t j = 0; j < m.size(); ++j) {
      const double g = (*p.grad)[j];
      m[j] = beta1 * m[j] + (1.0 - beta1) * g;
      v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      (*p.data)[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

TrainingBatch make_training_batch(const SyntheticPair& pair) {
  TrainingBatch b;
  b.a = pair.a;
  b.b = pair.b;
  b.gt = synthetic_ground_truth(pair.h, pair.a.h, pair.a.w);
  return b;
}

namespace {

Tensor image_to_tensor(const Image& im) {
  return Tensor::from({im.h, im.w, 1}, im.px);
}

struct EncodedPair {
  Tensor ga, gb;          // encoded 1/8 descriptor grids
  Tensor fine_a, fine_b;  // 1/2 descriptor grids
  WindowContext ctx;      // final-stage window layout
};

EncodedPair encode_pair(const Model& model, const Image& a, const Image& b,
                        const PipelineConfig& cfg) {
  if (a.h != b.h || a.w != b.w) throw ShapeError("encode_pair: images must share extents");
  if (a.h != a.w) throw ParamError("encode_pair: the staged schedule requires square images");
  if (a.h % 16) throw PartitionError("encode_pair: extents must be multiples of 16");

  PyramidFeatures pa = stem_forward(image_to_tensor(a), model.stem);
  PyramidFeatures pb = stem_forward(image_to_tensor(b), model.stem);

  const int grid_side = a.h / 8;
  StageSchedule schedule =
      interaction_schedule(effective_stage_count(cfg.stages, grid_side));
  if (static_cast<int>(model.encoder.stages.size()) < static_cast<int>(schedule.size()))
    throw ParamError("encode_pair: model has fewer encoder stages than the schedule");
  auto [ga, gb] = encode(pa.eighth, pb.eighth, schedule, model.encoder,
                         cfg.attn_temperature, &cfg);

  const Stage& last = schedule.back();
  const int side = grid_side / (1 << last.index);
  const int top_k = cfg.resolve_top_k(last.index, last.num_windows);

  EncodedPair out;
  out.ga = ga;
  out.gb = gb;
  out.fine_a = pa.half;
  out.fine_b = pb.half;
  out.ctx = WindowContext::make(grid_side, grid_side, side, top_k);
  return out;
}

}  // namespace

LossBreakdown training_forward(const Model& model, const TrainingBatch& batch,
                               const PipelineConfig& cfg,
                               const std::vector<double>* frozen_sigma2,
                               std::vector<double>* sigma2_out) {
  if (batch.gt.coarse.empty())
    throw ParamError("training_forward: batch has no supervision pairs");
  if (batch.gt.coarse.size() != batch.gt.fine_targets.size())
    throw ShapeError("training_forward: supervision pair/target count mismatch");
  if (frozen_sigma2 && frozen_sigma2->size() != batch.gt.coarse.size())
    throw ShapeError("training_forward: frozen weight count mismatch");

  EncodedPair ep = encode_pair(model, batch.a, batch.b, cfg);
  const int grid_w = ep.ga.shape[1];

  // Window-level similarity between the two encoded grids' window summaries.
  Tensor q_bar = window_average(window_partition(ep.ga, ep.ctx));
  Tensor k_bar = window_average(window_partition(ep.gb, ep.ctx));
  Tensor similarity = window_similarity(q_bar, k_bar);
  TopKIndex idx = select_top_k(similarity, ep.ctx.top_k);

  Tensor confidence = patch_confidence(ep.ga, ep.gb, cfg.match_temperature);
  auto [l_window, l_patch] =
      window_patch_loss(similarity, idx, confidence, batch.gt, ep.ctx, grid_w);

  // Subpixel term over the supervision pairs that survive the margin check.
  std::vector<FinePrediction> preds;
  std::vector<std::array<double, 2>> targets;
  if (sigma2_out) sigma2_out->assign(batch.gt.coarse.size(), -1.0);
  for (std::size_t g = 0; g < batch.gt.coarse.size(); ++g) {
    const auto& [pa, pb] = batch.gt.coarse[g];
    const int ar = pa / grid_w, ac = pa % grid_w;
    const int br = pb / grid_w, bc = pb % grid_w;
    FineRefinement fr = refine_match(ep.fine_a, ep.fine_b, 4 * ar + 2, 4 * ac + 2,
                                     4 * br + 2, 4 * bc + 2, cfg.fine_window);
    if (!fr.ok) continue;
    const double sigma2 = frozen_sigma2 ? (*frozen_sigma2)[g] : fr.sigma2;
    if (frozen_sigma2 && sigma2 < 0)
      throw ContractError("training_forward: frozen weights disagree with the "
                          "margin pattern");
    preds.push_back({fr.bx, fr.by, sigma2});
    targets.push_back(batch.gt.fine_targets[g]);
    if (sigma2_out) (*sigma2_out)[g] = sigma2;
  }
  PixelLossResult l_pixel = pixel_loss(preds, targets);

  LossWeights weights{cfg.lambda1, cfg.lambda2, cfg.lambda3};
  LossBreakdown out;
  out.total = total_loss(l_window, l_patch, l_pixel.value, weights);
  out.window = l_window.value();
  out.patch = l_patch.value();
  out.pixel = l_pixel.value.value();
  out.fine_pairs = static_cast<int>(preds.size());
  return out;
}

TrainResult train_model(Model& model, const std::vector<TrainingBatch>& data,
                        const PipelineConfig& cfg, int steps) {
  if (data.empty()) throw ParamError("train_model: no training batches");
  if (steps < 1) throw ParamError("train_model: need at least one step");

  const std::vector<Tensor> params = model.parameters();
  AdamState st = AdamState::init(params);

  TrainResult result;
  result.history.reserve(steps);
  for (int step = 0; step < steps; ++step) {
    const TrainingBatch& batch = data[step % data.size()];
    zero_grad(params);
    LossBreakdown lb = training_forward(model, batch, cfg);
    const double value = lb.total.value();
    if (!std::isfinite(value)) {
      result.finite = false;
      result.history.push_back(value);
      break;
    }
    backward(lb.total);
    adam_step(params, st, cfg.learning_rate);
    result.history.push_back(value);
  }
  for (const Tensor& p : params)
    for (double v : *p.data)
      if (!std::isfinite(v)) result.finite = false;

  result.initial_loss = result.history.front();
  result.final_loss = result.history.back();
  return result;
}

double coarse_precision_on(const Model& model, const std::vector<TrainingBatch>& data,
                           const PipelineConfig& cfg) {
  if (data.empty()) throw ParamError("coarse_precision_on: no batches");
  NoGradGuard ng;
  double total = 0.0;
  for (const TrainingBatch& batch : data) {
    EncodedPair ep = encode_pair(model, batch.a, batch.b, cfg);
    Tensor confidence = patch_confidence(ep.ga, ep.gb, cfg.match_temperature);
    std::vector<CoarseMatch> picked = mutual_nn_select(confidence, cfg.match_threshold);
    std::set<std::pair<int, int>> truth(batch.gt.coarse.begin(), batch.gt.coarse.end());
    int hit = 0;
    for (const CoarseMatch& cm : picked)
      if (truth.count({cm.a, cm.b})) ++hit;
    total += picked.empty() ? 0.0 : static_cast<double>(hit) / picked.size();
  }
  return total / data.size();
}

EvalReport evaluate_matches(const SyntheticPair& pair, const MatchSet& matches,
                            const PipelineConfig& cfg) {
  EvalReport r;
  r.kind = pair.kind;
  r.empty = matches.fine.empty();
  r.num_coarse = static_cast<int>(matches.coarse.size());
  r.num_fine = static_cast<int>(matches.fine.size());
  r.dropped_at_margin = matches.dropped_at_margin;
  r.config_echo = config_to_json(cfg);

  GroundTruth gt = synthetic_ground_truth(pair.h, pair.a.h, pair.a.w);
  std::set<std::pair<int, int>> truth(gt.coarse.begin(), gt.coarse.end());
  int coarse_hits = 0;
  for (const CoarseMatch& cm : matches.coarse)
    if (truth.count({cm.a, cm.b})) ++coarse_hits;
  r.coarse_precision =
      matches.coarse.empty() ? 0.0 : static_cast<double>(coarse_hits) / matches.coarse.size();

  int fine_hits = 0;
  for (const FineMatch& fm : matches.fine) {
    const auto p = pair.h.apply(fm.ax, fm.ay);
    const double dx = p[0] - fm.bx, dy = p[1] - fm.by;
    if (std::sqrt(dx * dx + dy * dy) <= 3.0) ++fine_hits;
  }
  r.precision =
      matches.fine.empty() ? 0.0 : static_cast<double>(fine_hits) / matches.fine.size();

  if (matches.fine.size() >= 4) {
    std::vector<Correspondence> pts;
    pts.reserve(matches.fine.size());
    for (const FineMatch& fm : matches.fine) pts.push_back({fm.ax, fm.ay, fm.bx, fm.by});
    try {
      RansacResult rr = estimate_homography_ransac(pts, cfg.ransac_iters,
                                                   cfg.ransac_inlier_px, cfg.seed);
      r.homography_ok = true;
      r.corner_err_px = mean_corner_error(rr.h, pair.h, pair.a.h, pair.a.w);
      r.corner_pass_3 = r.corner_err_px < 3.0 ? 1.0 : 0.0;
      r.corner_pass_5 = r.corner_err_px < 5.0 ? 1.0 : 0.0;
      r.corner_pass_10 = r.corner_err_px < 10.0 ? 1.0 : 0.0;
    } catch (const NumericError&) {
      r.homography_ok = false;
    }
  }
  return r;
}

std::string report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["kind"] = r.kind;
  j["empty"] = r.empty;
  j["num_coarse"] = r.num_coarse;
  j["num_fine"] = r.num_fine;
  j["dropped_at_margin"] = r.dropped_at_margin;
  j["coarse_precision"] = r.coarse_precision;
  j["precision"] = r.precision;
  j["homography_ok"] = r.homography_ok;
  j["corner_err_px"] = r.corner_err_px;
  j["corner_pass_3"] = r.corner_pass_3;
  j["corner_pass_5"] = r.corner_pass_5;
  j["corner_pass_10"] = r.corner_pass_10;
  if (!r.config_echo.empty())
    j["config"] = nlohmann::ordered_json::parse(r.config_echo);
  return j.dump(2) + "\n";
}

}  // namespace winmatch
