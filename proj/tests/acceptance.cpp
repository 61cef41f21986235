// End-to-end acceptance harness. Each numbered criterion prints one
// [PASS]/[FAIL] line with its measured values; the process exits non-zero if
// any criterion fails. argv[1] names the CLI binary used by the final
// determinism criterion.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "winmatch/config.hpp"
#include "winmatch/gradcheck.hpp"
#include "winmatch/homography.hpp"
#include "winmatch/loss.hpp"
#include "winmatch/matcher.hpp"
#include "winmatch/model.hpp"
#include "winmatch/reference.hpp"
#include "winmatch/rng.hpp"
#include "winmatch/synthetic.hpp"
#include "winmatch/train.hpp"
#include "winmatch/window_attention.hpp"

using namespace winmatch;
namespace fs = std::filesystem;

namespace {

struct Criterion {
  int number;
  std::string description;
  std::function<std::string()> run;  // returns detail text; throws on failure
};

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void require(bool ok, const std::string& what) {
  if (!ok) throw Failure(what);
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof buf, f, args);
  va_end(args);
  return std::string(buf);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  require(bool(in), "cannot read " + p.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// ---------------------------------------------------------------------------
// 1. The production attention path agrees with an independent line-by-line
//    transcription across 50 randomized instances covering every valid
//    window side and retention count, to 1e-10, within 10 seconds.
std::string run_transcription_sweep() {
  const auto t0 = std::chrono::steady_clock::now();
  ref::OracleReport r = ref::run_alg1_oracle_suite(50, 20240817);
  const double secs = seconds_since(t0);
  require(r.instances == 50, "sweep ran the wrong instance count");
  require(r.cases >= 50, "sweep exercised too few layouts");
  require(r.max_abs_diff < 1e-10,
          fmt("max abs diff %.3e exceeds 1e-10", r.max_abs_diff));
  require(secs < 10.0, fmt("sweep took %.1fs, budget 10s", secs));
  return fmt("max abs diff %.3e over %d cases, %.2fs", r.max_abs_diff, r.cases, secs);
}

// ---------------------------------------------------------------------------
// 2. On a 16x16 patch grid the augmented key/value set of every stage holds
//    exactly top_k * side^2 + num_windows rows, and stays below the full
//    256-row grid whenever that formula predicts it.
std::string run_kv_budget() {
  struct Layout {
    int side, top_k;
  };
  const Layout layouts[] = {{16, 1}, {8, 2}, {4, 4}, {2, 8}};
  Rng rng(7);
  Tensor f = Tensor::randn({16, 16, 3}, rng, 1.0);
  std::string detail;
  for (const Layout& lay : layouts) {
    WindowContext ctx = WindowContext::make(16, 16, lay.side, lay.top_k);
    WindowedFeatures keys = window_partition(f, ctx);
    Tensor summary = window_average(keys);
    TopKIndex idx = select_top_k(window_similarity(summary, summary), lay.top_k);
    const int expect = lay.top_k * lay.side * lay.side + ctx.windows();
    for (int q = 0; q < ctx.windows(); ++q) {
      AugmentedKV kv = build_kv(keys, keys, summary, summary, idx, q);
      require(kv.keys.shape[0] == expect && kv.values.shape[0] == expect,
              fmt("stage side %d: %d rows, expected %d", lay.side, kv.keys.shape[0],
                  expect));
      require(expect >= 256 || kv.keys.shape[0] < 256,
              fmt("stage side %d: %d rows not below the 256-row grid", lay.side,
                  kv.keys.shape[0]));
    }
    detail += fmt("%ss=%d:%d", detail.empty() ? "" : " ", lay.side, expect);
  }
  return "rows per stage " + detail;
}

// ---------------------------------------------------------------------------
// 3. The coarse-to-fine ladder uses 4^m windows and keeps 2^m of them at
//    every stage m = 0..5.
std::string run_schedule_law() {
  StageSchedule s = interaction_schedule(6);
  require(s.size() == 6, "schedule has the wrong depth");
  for (int m = 0; m < 6; ++m) {
    require(s[m].num_windows == (1 << (2 * m)),
            fmt("stage %d: %d windows, expected %d", m, s[m].num_windows, 1 << (2 * m)));
    require(s[m].top_k == (1 << m),
            fmt("stage %d: keeps %d, expected %d", m, s[m].top_k, 1 << m));
  }
  return "4^m windows / 2^m kept for m = 0..5";
}

// ---------------------------------------------------------------------------
// 4. Central finite differences confirm every analytic gradient in the suite
//    (projections, windowed attention, attention block, pyramid, training
//    objective on a 16x16 pair) to a relative error below 1e-4, within 60s.
std::string run_gradient_acceptance() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<GradReport> reports = run_gradient_suite(20240817);
  const double secs = seconds_since(t0);
  require(!reports.empty(), "gradient suite ran nothing");
  double worst = 0.0;
  std::string worst_name;
  for (const GradReport& r : reports) {
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      worst_name = r.op_name;
    }
    require(r.max_rel_error < 1e-4,
            fmt("%s: rel err %.3e exceeds 1e-4", r.op_name.c_str(), r.max_rel_error));
  }
  require(secs < 60.0, fmt("suite took %.1fs, budget 60s", secs));
  return fmt("%zu checks, worst %.3e (%s), %.1fs", reports.size(), worst,
             worst_name.c_str(), secs);
}

// ---------------------------------------------------------------------------
// 5. For every supervised pair the assignment and match log-probabilities sum
//    to the log of the product of the two probabilities (1e-9), and the
//    restricted assignment distribution sums to one (1e-12).
std::string run_loss_identities() {
  Rng rng(55);
  const int grid = 8, side = 2;                       // 16 windows of 4 patches
  const int n_windows = (grid / side) * (grid / side);
  const int top_k = 3;
  Tensor sim = Tensor::randn({n_windows, n_windows}, rng, 1.5);
  TopKIndex idx = select_top_k(sim, top_k);
  Tensor conf = Tensor::zeros({grid * grid, grid * grid});
  for (double& v : *conf.data) v = std::abs(rng.normal()) + 0.05;

  auto window_of = [&](int patch) {
    return (patch / grid / side) * (grid / side) + (patch % grid) / side;
  };
  auto patches_of = [&](int window) {
    const int wr = window / (grid / side), wc = window % (grid / side);
    std::vector<int> out;
    for (int dy = 0; dy < side; ++dy)
      for (int dx = 0; dx < side; ++dx)
        out.push_back((wr * side + dy) * grid + (wc * side + dx));
    return out;
  };

  double worst_joint = 0.0;
  for (int trial = 0; trial < 40; ++trial) {
    const int pa = int(rng.uniform_int(0, grid * grid - 1));
    const int pb = int(rng.uniform_int(0, grid * grid - 1));
    const int qw = window_of(pa), refw = window_of(pb);
    const bool listed = idx.contains(qw, refw);

    const double lp_w = window_assignment_logprob(sim, idx, qw, refw).value();
    double lp_m = 0.0;  // unlisted windows carry no match term: log 1
    if (listed) lp_m = patch_match_logprob(conf, patches_of(refw), pa, pb).value();

    // Independent probabilities via plain sums.
    double z = 0.0;
    for (int j = 0; j < n_windows; ++j) z += std::exp(sim.at(qw, j));
    double p_w;
    if (listed) {
      p_w = std::exp(sim.at(qw, refw)) / z;
    } else {
      double bucket = 0.0;
      for (int j = 0; j < n_windows; ++j)
        if (!idx.contains(qw, j)) bucket += std::exp(sim.at(qw, j));
      p_w = bucket / z;
    }
    double p_m = 1.0;
    if (listed) {
      double denom = 0.0;
      for (int q : patches_of(refw)) denom += conf.at(pa, q);
      p_m = conf.at(pa, pb) / denom;
    }
    const double gap = std::abs((lp_w + lp_m) - std::log(p_w * p_m));
    worst_joint = std::max(worst_joint, gap);
    require(gap <= 1e-9, fmt("joint identity off by %.3e", gap));
  }

  double worst_sum = 0.0;
  for (int q = 0; q < n_windows; ++q) {
    double total = 0.0;
    int outside = -1;
    for (int j = 0; j < n_windows; ++j) {
      if (idx.contains(q, j))
        total += std::exp(window_assignment_logprob(sim, idx, q, j).value());
      else
        outside = j;
    }
    require(outside >= 0, "every window listed; no bucket to test");
    total += std::exp(window_assignment_logprob(sim, idx, q, outside).value());
    worst_sum = std::max(worst_sum, std::abs(total - 1.0));
    require(std::abs(total - 1.0) <= 1e-12,
            fmt("assignment mass %.15f != 1 for window %d", total, q));
  }
  return fmt("joint identity within %.2e, assignment mass within %.2e", worst_joint,
             worst_sum);
}

// ---------------------------------------------------------------------------
// 6. 200 randomized window partition round-trips restore the input bit for
//    bit.
std::string run_partition_roundtrips() {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const int side = 1 + int(rng.uniform_int(0, 3));
    const int h = side * (1 + int(rng.uniform_int(0, 3)));
    const int w = side * (1 + int(rng.uniform_int(0, 3)));
    const int c = 1 + int(rng.uniform_int(0, 3));
    Tensor f = Tensor::randn({h, w, c}, rng, 1.0);
    Tensor back = window_reverse(window_partition(f, side), h, w);
    require(back.shape == f.shape, "round trip changed the shape");
    require(std::memcmp(back.data->data(), f.data->data(),
                        f.data->size() * sizeof(double)) == 0,
            fmt("trial %d (h=%d w=%d c=%d side=%d) not bit-exact", trial, h, w, c, side));
  }
  return "200 round trips bit-exact";
}

// ---------------------------------------------------------------------------
// 7. Descriptor-mode matching on a 128x128 pair translated 8 px: at least
//    95% of coarse matches agree with the truth and the fitted mapping's
//    mean corner error stays below 1 px, within 30 seconds.
std::string run_handcrafted_translation() {
  const auto t0 = std::chrono::steady_clock::now();
  SyntheticPair pair = gen_pair(128, 128, "translate", 8.0, 21);
  PipelineConfig cfg;
  cfg.features = "handcrafted";
  MatchSet ms = match_pipeline(pair.a, pair.b, cfg, nullptr);
  EvalReport r = evaluate_matches(pair, ms, cfg);
  const double secs = seconds_since(t0);

  require(r.num_coarse > 0, "no coarse matches at all");
  require(r.coarse_precision >= 0.95,
          fmt("coarse agreement %.3f below 0.95", r.coarse_precision));
  require(r.homography_ok, "too few refined matches to fit a mapping");
  require(r.corner_err_px < 1.0, fmt("corner error %.3f px not below 1", r.corner_err_px));
  require(secs < 30.0, fmt("matching took %.1fs, budget 30s", secs));
  return fmt("%d coarse, agreement %.3f, corner err %.3f px, %.2fs", r.num_coarse,
             r.coarse_precision, r.corner_err_px, secs);
}

// ---------------------------------------------------------------------------
// 8. 300 optimizer steps at lr 1e-3 on seeded 16x16 translation pairs at
//    least halve the objective with no non-finite values, and the trained
//    model reaches coarse precision >= 0.8 on 10 held-out pairs, within 5
//    minutes.
std::string run_training_progress() {
  const auto t0 = std::chrono::steady_clock::now();
  PipelineConfig cfg;
  cfg.seed = 4242;
  std::vector<TrainingBatch> data;
  for (int i = 0; i < 4; ++i)
    data.push_back(make_training_batch(
        gen_pair(16, 16, "translate", 2.0, mix_seed(cfg.seed, 100 + i), 0.01)));

  Model model = Model::init(cfg, effective_stage_count(cfg.stages, 2));
  TrainResult tr = train_model(model, data, cfg, 300);
  require(tr.finite, "training produced non-finite values");
  require(tr.history.size() == 300, "history has the wrong length");
  require(tr.final_loss <= 0.5 * tr.initial_loss,
          fmt("loss %.4f -> %.4f is not a halving", tr.initial_loss, tr.final_loss));

  std::vector<TrainingBatch> heldout;
  for (int i = 0; i < 10; ++i)
    heldout.push_back(make_training_batch(
        gen_pair(16, 16, "translate", 2.0, mix_seed(cfg.seed, 900 + i), 0.01)));
  const double precision = coarse_precision_on(model, heldout, cfg);
  const double secs = seconds_since(t0);
  require(precision >= 0.8, fmt("held-out coarse precision %.3f below 0.8", precision));
  require(secs < 300.0, fmt("training took %.1fs, budget 300s", secs));
  return fmt("loss %.4f -> %.4f, held-out precision %.3f, %.1fs", tr.initial_loss,
             tr.final_loss, precision, secs);
}

// ---------------------------------------------------------------------------
// 9. The direct fit recovers a noiseless mapping to 1e-6, and the robust fit
//    stays below 0.5 px corner error with 50% outliers at 1000 iterations.
std::string run_homography_fits() {
  Homography truth = Homography::rotation_about(16.0, 10.0, -35.0);
  truth.m[2] += 3.0;
  Rng rng(61);
  std::vector<Correspondence> clean;
  for (int i = 0; i < 12; ++i) {
    const double x = rng.uniform(0.0, 63.0), y = rng.uniform(0.0, 63.0);
    auto m = truth.apply(x, y);
    clean.push_back({x, y, m[0], m[1]});
  }
  const double direct = max_corner_error(estimate_homography_dlt(clean), truth, 64, 64);
  require(direct <= 1e-6, fmt("noiseless direct fit off by %.3e px", direct));

  Homography truth2 = Homography::rotation_about(32.0, 32.0, 10.0);
  truth2.m[2] += 5.0;
  truth2.m[5] -= 3.0;
  std::vector<Correspondence> mixed;
  for (int i = 0; i < 16; ++i) {
    const double x = rng.uniform(2.0, 62.0), y = rng.uniform(2.0, 62.0);
    auto m = truth2.apply(x, y);
    mixed.push_back({x, y, m[0], m[1]});
  }
  for (int i = 0; i < 16; ++i)
    mixed.push_back({rng.uniform(0.0, 64.0), rng.uniform(0.0, 64.0),
                     rng.uniform(0.0, 64.0), rng.uniform(0.0, 64.0)});
  RansacResult rr = estimate_homography_ransac(mixed, 1000, 3.0, 9);
  const double robust = max_corner_error(rr.h, truth2, 64, 64);
  require(robust < 0.5, fmt("robust fit corner error %.3f px not below 0.5", robust));
  return fmt("direct %.2e px, robust %.3f px with %zu/32 inliers", direct, robust,
             rr.inliers.size());
}

// ---------------------------------------------------------------------------
// 10. Repeated CLI match and eval runs on the same inputs produce
//     byte-identical outputs, in both descriptor and learned modes.
std::string run_cli_determinism(const std::string& cli) {
  require(!cli.empty(), "no CLI binary path supplied (argv[1])");
  require(fs::exists(cli), "CLI binary not found at " + cli);

  const fs::path dir =
      fs::temp_directory_path() / ("winmatch_accept_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  auto shell = [&](const std::string& cmd) {
    const std::string full = cmd + " > /dev/null 2>&1";
    const int rc = std::system(full.c_str());
    require(rc == 0, "command failed: " + cmd);
  };
  const std::string q = "\"" + cli + "\"";
  const std::string pair = (dir / "pair").string();

  shell(q + " gen --size 64x64 --kind translate --magnitude 8 --seed 77 --out " + pair);

  int checked = 0;
  for (const std::string mode : {"handcrafted", "learned"}) {
    const std::string m1 = (dir / (mode + "_m1.json")).string();
    const std::string m2 = (dir / (mode + "_m2.json")).string();
    shell(q + " match -a " + pair + "_a.pgm -b " + pair + "_b.pgm --features " + mode +
          " --seed 5 --out " + m1);
    shell(q + " match -a " + pair + "_a.pgm -b " + pair + "_b.pgm --features " + mode +
          " --seed 5 --out " + m2);
    require(slurp(m1) == slurp(m2), mode + " match outputs differ between runs");

    const std::string r1 = (dir / (mode + "_r1.json")).string();
    const std::string r2 = (dir / (mode + "_r2.json")).string();
    shell(q + " eval --pair " + pair + " --features " + mode + " --seed 5 --report " + r1);
    shell(q + " eval --pair " + pair + " --features " + mode + " --seed 5 --report " + r2);
    require(slurp(r1) == slurp(r2), mode + " eval reports differ between runs");
    checked += 4;
  }
  fs::remove_all(dir);
  return fmt("%d runs compared byte-for-byte in both modes", checked);
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";

  const std::vector<Criterion> criteria = {
      {1, "attention path matches its independent transcription on 50 seeded instances",
       run_transcription_sweep},
      {2, "augmented key/value rows equal top_k*side^2+windows on every 16x16-grid stage",
       run_kv_budget},
      {3, "interaction ladder uses 4^m windows and keeps 2^m at stages 0..5",
       run_schedule_law},
      {4, "finite differences confirm all analytic gradients below 1e-4",
       run_gradient_acceptance},
      {5, "supervision log-probabilities factorise and normalise exactly",
       run_loss_identities},
      {6, "200 window partition round-trips are bit-exact", run_partition_roundtrips},
      {7, "descriptor matching recovers an 8 px translation on 128x128 images",
       run_handcrafted_translation},
      {8, "300 optimizer steps halve the objective and generalise to held-out pairs",
       run_training_progress},
      {9, "direct fit is exact without noise; robust fit survives 50% outliers",
       run_homography_fits},
      {10, "repeated CLI match/eval runs are byte-identical",
       [&cli] { return run_cli_determinism(cli); }},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    try {
      const std::string detail = c.run();
      std::printf("[PASS] criterion %d: %s (%s)\n", c.number, c.description.c_str(),
                  detail.c_str());
    } catch (const std::exception& e) {
      ++failures;
      std::printf("[FAIL] criterion %d: %s — %s\n", c.number, c.description.c_str(),
                  e.what());
    }
    std::fflush(stdout);
  }

  if (failures == 0) {
    std::printf("all %zu criteria passed\n", criteria.size());
    return 0;
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return 1;
}
