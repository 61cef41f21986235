#include <cmath>

#include "winmatch/gradcheck.hpp"
#include "winmatch/synthetic.hpp"
#include "winmatch/train.hpp"

namespace winmatch {

std::vector<GradReport> run_gradient_suite(std::uint64_t seed) {
  std::vector<GradReport> reports;
  Rng rng(mix_seed(seed, 0x5eed));

  auto check = [&](const std::string& name, const std::function<Tensor(const Tensor&)>& f,
                   const Tensor& point) {
    reports.push_back(grad_check(name, f, point));
  };

  // --- tensor primitives ---------------------------------------------------
  {
    Tensor x = Tensor::randn({3, 4}, rng, 1.0);
    Tensor b = Tensor::randn({4, 2}, rng, 1.0);
    check("matmul", [&](const Tensor& t) { return sum_squares(matmul(t, b)); }, x);
    check("transpose_narrow",
          [&](const Tensor& t) { return sum_squares(narrow(transpose(t), 0, 1, 2)); }, x);
    check("softmax_rows",
          [&](const Tensor& t) { return sum_squares(softmax_rows(t, 0.7)); }, x);
    check("logsumexp", [&](const Tensor& t) { return logsumexp_all(t); }, x);
    check("silu", [&](const Tensor& t) { return sum_squares(silu(t)); }, x);
    check("mean_axis", [&](const Tensor& t) { return sum_squares(mean_axis(t, 1)); }, x);
    check("gather_rows",
          [&](const Tensor& t) { return sum_squares(gather_rows(t, {0, 2, 1, 2})); }, x);

    Tensor ones = Tensor::full({3, 4}, 1.0);
    check("mul_add_log",
          [&](const Tensor& t) { return sum_all(log_elem(add(mul(t, t), ones))); }, x);
    check("div",
          [&](const Tensor& t) { return sum_squares(div(t, add(mul(t, t), ones))); }, x);

    Tensor bias = Tensor::randn({4}, rng, 1.0);
    check("add_bias_rows",
          [&](const Tensor& t) { return sum_squares(add_bias_rows(t, bias)); }, x);
    check("concat_reshape",
          [&](const Tensor& t) {
            return sum_squares(reshape(concat({t, scale(t, 0.5)}, 0), {2, 12}));
          },
          x);
  }

  // --- convolution stack ---------------------------------------------------
  {
    Tensor f = Tensor::randn({4, 4, 3}, rng, 1.0);
    Tensor w = Tensor::randn({3, 3, 3, 2}, rng, 0.5);
    Tensor b = Tensor::randn({2}, rng, 0.2);
    check("conv3x3_input",
          [&](const Tensor& t) { return sum_squares(conv3x3(t, w, b, 1, PadMode::Zero)); }, f);
    check("conv3x3_kernel",
          [&](const Tensor& t) { return sum_squares(conv3x3(f, t, b, 1, PadMode::Zero)); }, w);

    Tensor dw = Tensor::randn({3, 3, 3}, rng, 0.5);
    Tensor db = Tensor::randn({3}, rng, 0.2);
    check("depthwise3x3",
          [&](const Tensor& t) { return sum_squares(depthwise3x3(t, dw, db, 1, PadMode::Zero)); }, f);
    check("maxpool2x2", [&](const Tensor& t) { return sum_squares(maxpool2x2(t)); }, f);
    check("upsample_nearest2x",
          [&](const Tensor& t) { return sum_squares(upsample_nearest2x(t)); }, f);

    Tensor gamma = Tensor::randn({3}, rng, 0.3);
    Tensor beta = Tensor::randn({3}, rng, 0.3);
    check("layer_norm",
          [&](const Tensor& t) { return sum_squares(layer_norm_channels(t, gamma, beta)); },
          f);

    MbconvParams mb = MbconvParams::init(3, 3, 1, rng);
    check("mbconv", [&](const Tensor& t) { return sum_squares(mbconv(t, mb)); }, f);
  }

  // --- windowed attention --------------------------------------------------
  {
    const int c = 3;
    WindowContext ctx = WindowContext::make(4, 4, 2, 2);
    AttentionParams ap = AttentionParams::init(c, rng);
    Tensor x1 = Tensor::randn({4, 4, c}, rng, 1.0);
    Tensor x2 = Tensor::randn({4, 4, c}, rng, 1.0);
    check("project_qkv",
          [&](const Tensor& t) {
            QkvProjection pr = project_qkv(t, x2, ap);
            return add(sum_squares(pr.q), add(sum_squares(pr.k), sum_squares(pr.v)));
          },
          x1);
    Tensor wv0 = ap.wv;
    check("project_qkv_wv",
          [&](const Tensor& t) {
            ap.wv = t;
            QkvProjection pr = project_qkv(x1, x2, ap);
            Tensor loss = sum_squares(pr.v);
            ap.wv = wv0;
            return loss;
          },
          wv0);
    check("window_attention_queries",
          [&](const Tensor& t) {
            return sum_squares(top_k_window_attention(t, x2, ctx, ap, 0.9));
          },
          x1);
    check("window_attention_keys",
          [&](const Tensor& t) {
            return sum_squares(top_k_window_attention(x1, t, ctx, ap, 0.9));
          },
          x2);
    check("attention_block",
          [&](const Tensor& t) {
            return sum_squares(attention_block(t, x2, ctx, ap, 0.9));
          },
          x1);
    Tensor wq0 = ap.wq;
    check("attention_block_wq",
          [&](const Tensor& t) {
            ap.wq = t;
            Tensor loss = sum_squares(attention_block(x1, x2, ctx, ap, 0.9));
            ap.wq = wq0;
            return loss;
          },
          wq0);
  }

  // --- convolutional pyramid ----------------------------------------------
  {
    StemParams sp = StemParams::init({2, 3, 4, 5}, rng);
    Tensor img = Tensor::randn({16, 16, 1}, rng, 0.5);
    check("stem_image",
          [&](const Tensor& t) {
            PyramidFeatures pf = stem_forward(t, sp);
            return add(sum_squares(pf.eighth), sum_squares(pf.half));
          },
          img);
    Tensor entry0 = sp.entry.w;
    check("stem_entry_kernel",
          [&](const Tensor& t) {
            sp.entry.w = t;
            PyramidFeatures pf = stem_forward(img, sp);
            Tensor loss = add(sum_squares(pf.eighth), sum_squares(pf.half));
            sp.entry.w = entry0;
            return loss;
          },
          entry0);
  }

  // --- full training objective ---------------------------------------------
  {
    PipelineConfig cfg;
    cfg.seed = mix_seed(seed, 0x10551055);
    SyntheticPair pair = gen_pair(16, 16, "translate", 2.0, cfg.seed, 0.01);
    TrainingBatch batch = make_training_batch(pair);
    Model model = Model::init(cfg, effective_stage_count(cfg.stages, 2));

    // The subpixel weights are constants to the optimizer; replaying the
    // weights captured at the unperturbed point keeps the difference
    // quotients measuring the same function the backward pass differentiates.
    std::vector<double> frozen;
    training_forward(model, batch, cfg, nullptr, &frozen);

    auto check_slot = [&](const std::string& name, Tensor& slot) {
      Tensor original = slot;
      check("loss_wrt_" + name,
            [&](const Tensor& t) {
              slot = t;
              Tensor loss = training_forward(model, batch, cfg, &frozen).total;
              slot = original;
              return loss;
            },
            original);
      slot = original;
    };

    check_slot("stem_entry", model.stem.entry.w);
    check_slot("stem_merge_proj", model.stem.merge_proj.w);
    check_slot("stem_stage3_dw", model.stem.stage3[0].m1.dw.w);
    check_slot("self_attn_wq", model.encoder.stages[0].self_attn.wq);
    check_slot("cross_attn_wv", model.encoder.stages[1].cross_attn.wv);
    check_slot("spatial_gate", model.encoder.stages[0].self_attn.alpha_s);
    check_slot("channel_gate", model.encoder.stages[0].self_attn.alpha_c);
    check_slot("channel_proj", model.encoder.stages[1].self_attn.wkc);
  }

  return reports;
}

}  // namespace winmatch
