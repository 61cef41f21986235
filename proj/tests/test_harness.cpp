#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "winmatch/config.hpp"
#include "winmatch/homography.hpp"
#include "winmatch/image_io.hpp"
#include "winmatch/matcher.hpp"
#include "winmatch/model.hpp"
#include "winmatch/rng.hpp"
#include "winmatch/synthetic.hpp"
#include "winmatch/train.hpp"

using namespace winmatch;

namespace {

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

std::filesystem::path tmp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("winmatch_test_" + name);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(bool(in));
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("zero-magnitude pairs are identical with an identity mapping") {
  SyntheticPair pair = gen_pair(32, 32, "translate", 0.0, 5);
  REQUIRE(pair.a.px.size() == pair.b.px.size());
  for (std::size_t i = 0; i < pair.a.px.size(); ++i) CHECK(pair.a.px[i] == pair.b.px[i]);
  for (int i = 0; i < 9; ++i)
    CHECK(pair.h.m[i] == Homography::identity().m[i]);
}

TEST_CASE("an integer translation writes the exact translation matrix") {
  SyntheticPair pair = gen_pair(64, 64, "translate", 8.0, 5);
  const double expect[9] = {1, 0, 8, 0, 1, 0, 0, 0, 1};
  for (int i = 0; i < 9; ++i) CHECK(pair.h.m[i] == expect[i]);
}

TEST_CASE("generation is bit-identical per seed and changes across seeds") {
  SyntheticPair p1 = gen_pair(32, 32, "homography", 3.0, 77, 0.05);
  SyntheticPair p2 = gen_pair(32, 32, "homography", 3.0, 77, 0.05);
  CHECK(p1.a.px == p2.a.px);
  CHECK(p1.b.px == p2.b.px);
  CHECK(p1.h.m == p2.h.m);

  SyntheticPair p3 = gen_pair(32, 32, "homography", 3.0, 78, 0.05);
  CHECK(p1.a.px != p3.a.px);
}

TEST_CASE("noise is additive on top of the clean render") {
  SyntheticPair clean = gen_pair(32, 32, "translate", 4.0, 13, 0.0);
  SyntheticPair noisy = gen_pair(32, 32, "translate", 4.0, 13, 0.1);
  CHECK(clean.a.px != noisy.a.px);
  CHECK(clean.h.m == noisy.h.m);  // geometry is unaffected
}

TEST_CASE("unknown pair kinds are rejected") {
  CHECK_THROWS_AS(gen_pair(32, 32, "zoom", 1.0, 1), ParamError);
}

TEST_CASE("the low-contrast kind compresses intensities around mid-gray") {
  SyntheticPair flat = gen_pair(32, 32, "lowtexture", 4.0, 9);
  double lo = 1.0, hi = 0.0;
  for (double v : flat.a.px) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(hi - lo < 0.2);  // a tenth of the usual [0, 1] swing, roughly
  CHECK(hi <= 0.56);
  CHECK(lo >= 0.44);
}

TEST_CASE("supervision pairs shift one patch column under an 8 px translation") {
  SyntheticPair pair = gen_pair(64, 64, "translate", 8.0, 3);
  GroundTruth gt = synthetic_ground_truth(pair.h, 64, 64);
  // 8x8 patch grid; the rightmost source column maps off the image.
  REQUIRE(gt.coarse.size() == 8 * 7);
  REQUIRE(gt.fine_targets.size() == gt.coarse.size());
  for (std::size_t i = 0; i < gt.coarse.size(); ++i) {
    const int pa = gt.coarse[i].first, pb = gt.coarse[i].second;
    const int r = pa / 8, c = pa % 8;
    CHECK(c <= 6);
    CHECK(pb == r * 8 + c + 1);
    // Anchor of patch (r, c) sits at pixel (8c+5, 8r+5); translated 8 right.
    CHECK(near(gt.fine_targets[i][0], 8.0 * c + 13.0, 1e-12));
    CHECK(near(gt.fine_targets[i][1], 8.0 * r + 5.0, 1e-12));
  }
}

TEST_CASE("training batches carry the generating supervision") {
  SyntheticPair pair = gen_pair(64, 64, "translate", 8.0, 3);
  TrainingBatch batch = make_training_batch(pair);
  GroundTruth gt = synthetic_ground_truth(pair.h, 64, 64);
  CHECK(batch.gt.coarse == gt.coarse);
  CHECK(batch.a.px == pair.a.px);
  CHECK(batch.b.px == pair.b.px);
}

TEST_CASE("mappings compose with their inverse to the identity") {
  Homography h = Homography::rotation_about(16.0, 16.0, 30.0);
  Homography hi = h.inverse();
  const double pts[4][2] = {{1, 2}, {20, 5}, {7, 30}, {31, 31}};
  for (const double* p : pts) {
    auto fwd = h.apply(p[0], p[1]);
    auto back = hi.apply(fwd[0], fwd[1]);
    CHECK(near(back[0], p[0], 1e-12));
    CHECK(near(back[1], p[1], 1e-12));
  }
}

TEST_CASE("a vanishing projective denominator is a numeric error") {
  Homography h;
  h.m = {1, 0, 0, 0, 1, 0, -0.2, 0, 1};  // w = 1 - x/5
  CHECK_THROWS_AS(h.apply(5.0, 1.0), NumericError);
}

TEST_CASE("four exact correspondences reproduce themselves through the direct fit") {
  Homography truth = Homography::rotation_about(10.0, 12.0, 20.0);
  const std::vector<std::pair<double, double>> sources = {{0, 0}, {31, 0}, {0, 31}, {29, 27}};
  std::vector<Correspondence> pts;
  for (auto [x, y] : sources) {
    auto m = truth.apply(x, y);
    pts.push_back({x, y, m[0], m[1]});
  }
  Homography est = estimate_homography_dlt(pts);
  for (const Correspondence& c : pts) CHECK(reprojection_error(est, c) < 1e-9);
}

TEST_CASE("many exact correspondences recover the mapping to machine precision") {
  Homography truth = Homography::rotation_about(16.0, 10.0, -35.0);
  truth.m[2] += 3.0;  // add a translation component
  std::vector<Correspondence> pts;
  Rng rng(61);
  for (int i = 0; i < 12; ++i) {
    const double x = rng.uniform(0.0, 63.0), y = rng.uniform(0.0, 63.0);
    auto m = truth.apply(x, y);
    pts.push_back({x, y, m[0], m[1]});
  }
  Homography est = estimate_homography_dlt(pts);
  CHECK(max_corner_error(est, truth, 64, 64) < 1e-6);
}

TEST_CASE("fewer than four correspondences are rejected") {
  std::vector<Correspondence> pts = {{0, 0, 0, 0}, {1, 0, 1, 0}, {0, 1, 0, 1}};
  CHECK_THROWS_AS(estimate_homography_dlt(pts), ParamError);
}

TEST_CASE("the robust fit survives half the correspondences being wrong") {
  Homography truth = Homography::rotation_about(32.0, 32.0, 10.0);
  truth.m[2] += 5.0;
  truth.m[5] -= 3.0;
  std::vector<Correspondence> pts;
  Rng rng(62);
  for (int i = 0; i < 16; ++i) {
    const double x = rng.uniform(2.0, 62.0), y = rng.uniform(2.0, 62.0);
    auto m = truth.apply(x, y);
    pts.push_back({x, y, m[0], m[1]});
  }
  for (int i = 0; i < 16; ++i)
    pts.push_back({rng.uniform(0.0, 64.0), rng.uniform(0.0, 64.0),
                   rng.uniform(0.0, 64.0), rng.uniform(0.0, 64.0)});

  RansacResult rr = estimate_homography_ransac(pts, 1000, 3.0, 9);
  CHECK(rr.inliers.size() >= 16);
  CHECK(max_corner_error(rr.h, truth, 64, 64) < 0.5);
}

TEST_CASE("corner displacement separates the threshold bands") {
  // Corners displaced by exactly 4 px give a mean corner error of 4: outside
  // the 3 px band, inside the 5 and 10 px bands.
  Homography truth = Homography::identity();
  std::vector<Correspondence> corners = {
      {0, 0, 4, 0}, {64, 0, 68, 0}, {0, 64, 4, 64}, {64, 64, 68, 64}};
  Homography est = estimate_homography_dlt(corners);
  const double mean_err = mean_corner_error(est, truth, 64, 64);
  CHECK(near(mean_err, 4.0, 1e-6));
  CHECK(mean_err > 3.0);
  CHECK(mean_err < 5.0);
  CHECK(max_corner_error(est, truth, 64, 64) >= mean_err);
}

TEST_CASE("images survive the 8-bit round trip at quantisation accuracy") {
  Rng rng(63);
  Image im = Image::zeros(9, 13);
  for (double& v : im.px) v = rng.uniform(0.0, 1.0);
  const auto path = tmp_path("roundtrip.pgm");
  write_pgm(im, path.string());
  Image back = read_pgm(path.string());
  REQUIRE(back.h == im.h);
  REQUIRE(back.w == im.w);
  for (std::size_t i = 0; i < im.px.size(); ++i) {
    CHECK(near(back.px[i], im.px[i], 0.5 / 255.0 + 1e-12));
    // Re-writing the quantised image is lossless.
    CHECK(near(back.px[i], std::lround(im.px[i] * 255.0) / 255.0, 1e-12));
  }
  std::filesystem::remove(path);
}

TEST_CASE("reading a non-PGM file is an input error") {
  const auto path = tmp_path("not_a_pgm.pgm");
  std::ofstream(path) << "P3\n1 1\n255\n0 0 0\n";
  CHECK_THROWS_AS(read_pgm(path.string()), IoError);
  std::filesystem::remove(path);
}

TEST_CASE("overlays colour confident lines green and tentative lines red") {
  Image a = Image::zeros(16, 16);
  Image b = Image::zeros(16, 16);
  std::vector<FineMatch> matches = {
      {3, 3, 12, 3, 0.9, 1.0},   // strong: green
      {3, 12, 12, 12, 0.4, 1.0}, // tentative: red
      {8, 8, 8, 8, 0.1, 1.0},    // weak: omitted
  };
  const auto path = tmp_path("overlay.ppm");
  write_match_overlay(a, b, matches, path.string());
  const std::string bytes = slurp(path);
  REQUIRE(bytes.rfind("P6\n", 0) == 0);

  int green = 0, red = 0, other = 0;
  const std::size_t header = bytes.find("255\n") + 4;
  for (std::size_t i = header; i + 2 < bytes.size(); i += 3) {
    const unsigned char r = bytes[i], g = bytes[i + 1], bl = bytes[i + 2];
    if (r == 0 && g == 255 && bl == 0) ++green;
    else if (r == 255 && g == 0 && bl == 0) ++red;
    else if (r != g || g != bl) ++other;
  }
  CHECK(green > 0);
  CHECK(red > 0);
  CHECK(other == 0);  // everything else stays grayscale
  std::filesystem::remove(path);
}

TEST_CASE("configs round-trip through their JSON form") {
  PipelineConfig cfg;
  cfg.seed = 123;
  cfg.stages = 3;
  cfg.topk_schedule = "fixed:2";
  cfg.features = "handcrafted";
  cfg.match_temperature = 0.05;
  const std::string text = config_to_json(cfg);
  PipelineConfig back = config_from_json_text(text);
  CHECK(config_to_json(back) == text);
}

TEST_CASE("config parsing separates I/O, key and value failures") {
  CHECK_THROWS_AS(config_from_json_text("{ not json"), IoError);
  CHECK_THROWS_AS(config_from_json_text("[1, 2]"), IoError);
  CHECK_THROWS_AS(config_from_json_text("{\"bogus_key\": 1}"), ParamError);
  CHECK_THROWS_AS(config_from_json_text("{\"stages\": \"four\"}"), ParamError);
  CHECK_THROWS_AS(config_from_json_text("{\"fine_window\": 4}"), ParamError);
  CHECK_THROWS_AS(config_from_json_text("{\"topk_schedule\": \"fixed:0\"}"), ParamError);
  CHECK_THROWS_AS(config_from_json_text("{\"features\": \"sift\"}"), ParamError);
}

TEST_CASE("fixed and automatic retention schedules resolve per stage") {
  PipelineConfig cfg;
  cfg.topk_schedule = "auto";
  CHECK(cfg.resolve_top_k(0, 64) == 1);
  CHECK(cfg.resolve_top_k(3, 64) == 8);
  CHECK(cfg.resolve_top_k(3, 4) == 4);  // clamped to the window count
  cfg.topk_schedule = "fixed:3";
  CHECK(cfg.resolve_top_k(0, 64) == 3);
  CHECK(cfg.resolve_top_k(5, 2) == 2);
}

TEST_CASE("checkpoints restore every parameter bit-exactly") {
  PipelineConfig cfg;
  Model model = Model::init(cfg, 3);
  const auto bin = tmp_path("ckpt.bin");
  const auto manifest = tmp_path("ckpt.manifest.json");
  save_checkpoint(model, bin.string(), manifest.string());
  Model back = load_checkpoint(cfg, bin.string(), manifest.string());

  auto a = model.named_parameters();
  auto b = back.named_parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    REQUIRE(a[i].second.shape == b[i].second.shape);
    CHECK(*a[i].second.data == *b[i].second.data);
  }
  std::filesystem::remove(bin);
  std::filesystem::remove(manifest);
}

TEST_CASE("corrupted checkpoints are rejected") {
  PipelineConfig cfg;
  Model model = Model::init(cfg, 2);
  const auto bin = tmp_path("bad.bin");
  const auto manifest = tmp_path("bad.manifest.json");
  save_checkpoint(model, bin.string(), manifest.string());

  std::string bytes = slurp(bin);
  std::ofstream(bin, std::ios::binary) << bytes.substr(0, bytes.size() - 8);
  CHECK_THROWS_AS(load_checkpoint(cfg, bin.string(), manifest.string()), IoError);

  std::ofstream(bin, std::ios::binary) << bytes << "xx";
  CHECK_THROWS_AS(load_checkpoint(cfg, bin.string(), manifest.string()), IoError);

  std::ofstream(bin, std::ios::binary) << bytes;
  std::ofstream(manifest) << "{\"format\": \"something-else\"}\n";
  CHECK_THROWS_AS(load_checkpoint(cfg, bin.string(), manifest.string()), IoError);

  std::filesystem::remove(bin);
  std::filesystem::remove(manifest);
}

TEST_CASE("one optimiser step moves a parameter by the learning rate") {
  Tensor p = Tensor::from({2}, {1.0, -2.0}, true);
  (*p.grad)[0] = 0.5;   // steady gradient: the normalised step is +- lr
  (*p.grad)[1] = -0.25;
  AdamState st = AdamState::init({p});
  adam_step({p}, st, 0.1);
  CHECK(near(p.at(0), 1.0 - 0.1, 1e-6));
  CHECK(near(p.at(1), -2.0 + 0.1, 1e-6));
  CHECK(st.t == 1);
}

TEST_CASE("parameters without gradient signal stay put") {
  Tensor p = Tensor::from({2}, {3.0, 4.0}, true);
  AdamState st = AdamState::init({p});
  adam_step({p}, st, 0.1);  // grads are zero
  CHECK(p.at(0) == 3.0);
  CHECK(p.at(1) == 4.0);
}

TEST_CASE("short training runs are bit-identical across repeats") {
  PipelineConfig cfg;
  cfg.seed = 4242;
  std::vector<TrainingBatch> data = {
      make_training_batch(gen_pair(16, 16, "translate", 2.0, mix_seed(cfg.seed, 100), 0.01))};

  TrainResult r1, r2;
  for (TrainResult* r : {&r1, &r2}) {
    Model model = Model::init(cfg, effective_stage_count(cfg.stages, 2));
    *r = train_model(model, data, cfg, 3);
  }
  CHECK(r1.finite);
  REQUIRE(r1.history.size() == 3);
  CHECK(r1.history == r2.history);
  CHECK(r1.initial_loss == r2.initial_loss);
  CHECK(r1.final_loss == r2.final_loss);
}

TEST_CASE("the supervised objective reports all three components") {
  PipelineConfig cfg;
  cfg.seed = 99;
  TrainingBatch batch =
      make_training_batch(gen_pair(16, 16, "translate", 2.0, mix_seed(cfg.seed, 1), 0.01));
  Model model = Model::init(cfg, effective_stage_count(cfg.stages, 2));
  LossBreakdown lb = training_forward(model, batch, cfg);
  CHECK(std::isfinite(lb.total.value()));
  CHECK(lb.window >= 0.0);
  CHECK(lb.patch >= 0.0);
  CHECK(lb.pixel >= 0.0);
  CHECK(near(lb.total.value(),
             cfg.lambda1 * lb.window + cfg.lambda2 * lb.patch + cfg.lambda3 * lb.pixel,
             1e-9));
}

TEST_CASE("frozen spread replay reproduces the captured objective") {
  PipelineConfig cfg;
  cfg.seed = 100;
  TrainingBatch batch =
      make_training_batch(gen_pair(16, 16, "translate", 2.0, mix_seed(cfg.seed, 2), 0.01));
  Model model = Model::init(cfg, effective_stage_count(cfg.stages, 2));
  std::vector<double> captured;
  LossBreakdown first = training_forward(model, batch, cfg, nullptr, &captured);
  REQUIRE(!captured.empty());
  LossBreakdown replay = training_forward(model, batch, cfg, &captured, nullptr);
  CHECK(replay.total.value() == first.total.value());
  CHECK(replay.fine_pairs == first.fine_pairs);
}

TEST_CASE("evaluation scores a descriptor-mode match against the truth") {
  SyntheticPair pair = gen_pair(64, 64, "translate", 8.0, 21);
  PipelineConfig cfg;
  cfg.features = "handcrafted";
  MatchSet ms = match_pipeline(pair.a, pair.b, cfg, nullptr);
  EvalReport r = evaluate_matches(pair, ms, cfg);

  CHECK_FALSE(r.empty);
  CHECK(r.kind == "translate");
  CHECK(r.num_coarse == static_cast<int>(ms.coarse.size()));
  CHECK(r.num_fine == static_cast<int>(ms.fine.size()));
  CHECK(r.coarse_precision >= 0.95);
  CHECK(r.precision >= 0.9);
  CHECK(r.homography_ok);
  CHECK(r.corner_err_px >= 0.0);
  CHECK(r.corner_err_px < 1.0);
  CHECK(r.corner_pass_3 == 1.0);
  // Pass fractions widen monotonically with the threshold.
  CHECK(r.corner_pass_3 <= r.corner_pass_5);
  CHECK(r.corner_pass_5 <= r.corner_pass_10);

  const std::string json = report_to_json(r);
  auto parsed = nlohmann::json::parse(json);
  CHECK(parsed.at("kind") == "translate");
  CHECK(parsed.at("num_coarse") == r.num_coarse);
  CHECK(parsed.at("config").at("features") == "handcrafted");
  // Identical inputs serialize identically.
  CHECK(report_to_json(evaluate_matches(pair, ms, cfg)) == json);
}

TEST_CASE("an empty match set is flagged and scored zero") {
  SyntheticPair pair = gen_pair(32, 32, "translate", 4.0, 22);
  PipelineConfig cfg;
  cfg.features = "handcrafted";
  EvalReport r = evaluate_matches(pair, MatchSet{}, cfg);
  CHECK(r.empty);
  CHECK(r.num_fine == 0);
  CHECK(r.precision == 0.0);
  CHECK_FALSE(r.homography_ok);
  CHECK(r.corner_err_px == -1.0);
  auto parsed = nlohmann::json::parse(report_to_json(r));
  CHECK(parsed.at("empty") == true);
}
