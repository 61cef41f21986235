// Command-line front end: synthetic pair generation, training, matching,
// evaluation, and the numeric self-checks.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "winmatch/gradcheck.hpp"
#include "winmatch/image_io.hpp"
#include "winmatch/reference.hpp"
#include "winmatch/train.hpp"

namespace {

using winmatch::IoError;
using winmatch::ParamError;

struct SizeArg {
  int h = 128, w = 128;
};

SizeArg parse_size(const std::string& text) {
  const auto x = text.find('x');
  if (x == std::string::npos || x == 0 || x + 1 >= text.size())
    throw ParamError("--size expects HxW, got '" + text + "'");
  try {
    SizeArg s;
    s.h = std::stoi(text.substr(0, x));
    s.w = std::stoi(text.substr(x + 1));
    if (s.h < 16 || s.w < 16) throw ParamError("--size extents must be at least 16");
    return s;
  } catch (const std::invalid_argument&) {
    throw ParamError("--size expects integers, got '" + text + "'");
  } catch (const std::out_of_range&) {
    throw ParamError("--size value out of range in '" + text + "'");
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("failed writing " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Sidecar describing a generated pair; enough to rebuild the ground truth.
void write_pair_meta(const std::string& path, const winmatch::SyntheticPair& pair,
                     double magnitude, double noise, std::uint64_t seed) {
  nlohmann::ordered_json j;
  j["kind"] = pair.kind;
  j["height"] = pair.a.h;
  j["width"] = pair.a.w;
  j["magnitude"] = magnitude;
  j["noise"] = noise;
  j["seed"] = seed;
  j["homography"] = pair.h.m;
  write_text(path, j.dump(2) + "\n");
}

winmatch::SyntheticPair read_pair(const std::string& prefix) {
  winmatch::SyntheticPair pair;
  pair.a = winmatch::read_pgm(prefix + "_a.pgm");
  pair.b = winmatch::read_pgm(prefix + "_b.pgm");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(prefix + "_meta.json"));
    pair.kind = j.at("kind").get<std::string>();
    const auto m = j.at("homography").get<std::vector<double>>();
    if (m.size() != 9) throw IoError("pair metadata: homography needs 9 entries");
    std::copy(m.begin(), m.end(), pair.h.m.begin());
  } catch (const nlohmann::json::exception& e) {
    throw IoError("pair metadata " + prefix + "_meta.json: " + e.what());
  }
  return pair;
}

winmatch::PipelineConfig load_or_default(const std::string& config_path,
                                         std::uint64_t seed, bool seed_given,
                                         int stages, bool stages_given,
                                         const std::string& topk_schedule) {
  winmatch::PipelineConfig cfg;
  if (!config_path.empty()) cfg = winmatch::load_config(config_path);
  if (seed_given) cfg.seed = seed;
  if (stages_given) cfg.stages = stages;
  if (!topk_schedule.empty()) cfg.topk_schedule = topk_schedule;
  cfg.validate();
  return cfg;
}

winmatch::Model model_for(const winmatch::PipelineConfig& cfg,
                          const std::string& checkpoint, int grid_side) {
  const int stages =
      winmatch::effective_stage_count(cfg.stages, grid_side);
  if (checkpoint.empty()) return winmatch::Model::init(cfg, stages);
  return winmatch::load_checkpoint(cfg, checkpoint + ".bin",
                                   checkpoint + ".manifest.json");
}

std::string matches_to_json(const winmatch::MatchSet& ms) {
  nlohmann::ordered_json j;
  j["num_coarse"] = ms.coarse.size();
  j["num_fine"] = ms.fine.size();
  j["dropped_at_margin"] = ms.dropped_at_margin;
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& m : ms.fine) {
    nlohmann::ordered_json e;
    e["ax"] = m.ax;
    e["ay"] = m.ay;
    e["bx"] = m.bx;
    e["by"] = m.by;
    e["confidence"] = m.confidence;
    e["sigma2"] = m.sigma2;
    arr.push_back(e);
  }
  j["matches"] = arr;
  return j.dump(2) + "\n";
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                     start)
        .count();
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"top-k window attention feature matching"};
  app.require_subcommand(1);

  std::string config_path, out, checkpoint, kind = "translate", size_text = "128x128";
  std::uint64_t seed = 7;
  bool timing = false;
  double magnitude = 8.0, noise = 0.0;

  int stages_override = 0;
  bool stages_given = false;
  std::string topk_override;
  app.add_option("--config", config_path, "JSON config file");
  app.add_flag("--timing", timing, "print wall-clock timing to stderr");
  app.add_option("--stages", stages_override, "override the configured stage count")
      ->each([&](const std::string&) { stages_given = true; });
  app.add_option("--topk-schedule", topk_override,
                 "override the per-stage window budget: auto | fixed:<k>");

  // gen ----------------------------------------------------------------
  auto* gen = app.add_subcommand("gen", "generate a synthetic image pair");
  gen->fallthrough();
  gen->add_option("--size", size_text, "image extents, HxW");
  gen->add_option("--kind", kind, "translate | rotate | homography | lowtexture");
  gen->add_option("--magnitude", magnitude, "transform magnitude (px or degrees)");
  gen->add_option("--noise", noise, "additive Gaussian noise stdev");
  gen->add_option("--seed", seed, "generation seed");
  gen->add_option("--out", out, "output prefix")->required();

  // match --------------------------------------------------------------
  std::string in_a, in_b, render, features_override;
  std::uint64_t cli_seed = 0;
  bool seed_given = false;
  auto* match = app.add_subcommand("match", "match two grayscale PGM images");
  match->fallthrough();
  match->add_option("-a,--image-a", in_a, "first image (P5 PGM)")->required();
  match->add_option("-b,--image-b", in_b, "second image (P5 PGM)")->required();
  match->add_option("--checkpoint", checkpoint, "checkpoint prefix for learned features");
  match->add_option("--features", features_override, "override: learned | handcrafted");
  match->add_option("--out", out, "matches JSON path")->required();
  match->add_option("--render", render, "optional side-by-side overlay (P6 PPM)");
  match->add_option("--seed", cli_seed, "override config seed")
      ->each([&](const std::string&) { seed_given = true; });

  // eval ---------------------------------------------------------------
  std::string pair_prefix, report_path;
  auto* eval = app.add_subcommand("eval", "match a generated pair and score it");
  eval->fallthrough();
  eval->add_option("--pair", pair_prefix, "prefix from 'gen'")->required();
  eval->add_option("--checkpoint", checkpoint, "checkpoint prefix for learned features");
  eval->add_option("--features", features_override, "override: learned | handcrafted");
  eval->add_option("--report", report_path, "evaluation report JSON path")->required();
  eval->add_option("--seed", cli_seed, "override config seed")
      ->each([&](const std::string&) { seed_given = true; });

  // train --------------------------------------------------------------
  int steps = 300, num_pairs = 4;
  auto* train = app.add_subcommand("train", "train on synthetic pairs");
  train->fallthrough();
  train->add_option("--size", size_text, "image extents, HxW");
  train->add_option("--kind", kind, "pair kind");
  train->add_option("--magnitude", magnitude, "transform magnitude");
  train->add_option("--noise", noise, "additive noise stdev");
  train->add_option("--steps", steps, "optimizer steps");
  train->add_option("--pairs", num_pairs, "distinct training pairs");
  train->add_option("--seed", cli_seed, "override config seed")
      ->each([&](const std::string&) { seed_given = true; });
  train->add_option("--out", out, "checkpoint prefix")->required();

  // gradcheck ------------------------------------------------------------
  double tol = 1e-4;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gradcheck->fallthrough();
  gradcheck->add_option("--seed", seed, "suite seed");
  gradcheck->add_option("--tol", tol, "max relative error accepted");

  // oracle ---------------------------------------------------------------
  int instances = 50;
  auto* oracle = app.add_subcommand("oracle",
                                    "randomized equivalence sweep of the attention path");
  oracle->fallthrough();
  oracle->add_option("--instances", instances, "number of seeded draws");
  oracle->add_option("--seed", seed, "sweep seed");

  try {
    app.parse(argc, argv);

    Timer timer;
    if (gen->parsed()) {
      const SizeArg sz = parse_size(size_text);
      winmatch::SyntheticPair pair =
          winmatch::gen_pair(sz.h, sz.w, kind, magnitude, seed, noise);
      winmatch::write_pgm(pair.a, out + "_a.pgm");
      winmatch::write_pgm(pair.b, out + "_b.pgm");
      write_pair_meta(out + "_meta.json", pair, magnitude, noise, seed);
      std::cout << "wrote " << out << "_{a,b}.pgm and " << out << "_meta.json\n";
    } else if (match->parsed() || eval->parsed()) {
      winmatch::PipelineConfig cfg = load_or_default(
          config_path, cli_seed, seed_given, stages_override, stages_given, topk_override);
      if (!features_override.empty()) {
        cfg.features = features_override;
        cfg.validate();
      }
      winmatch::SyntheticPair pair;
      if (match->parsed()) {
        pair.a = winmatch::read_pgm(in_a);
        pair.b = winmatch::read_pgm(in_b);
      } else {
        pair = read_pair(pair_prefix);
      }
      winmatch::Model model;
      const winmatch::Model* model_ptr = nullptr;
      if (cfg.features == "learned") {
        model = model_for(cfg, checkpoint, pair.a.h / 8);
        model_ptr = &model;
      }
      winmatch::MatchSet ms = winmatch::match_pipeline(pair.a, pair.b, cfg, model_ptr);
      if (match->parsed()) {
        write_text(out, matches_to_json(ms));
        if (!render.empty()) winmatch::write_match_overlay(pair.a, pair.b, ms.fine, render);
        std::cout << "wrote " << out << " (" << ms.fine.size() << " matches)\n";
      } else {
        winmatch::EvalReport report = winmatch::evaluate_matches(pair, ms, cfg);
        write_text(report_path, winmatch::report_to_json(report));
        std::cout << "wrote " << report_path << "\n";
      }
    } else if (train->parsed()) {
      winmatch::PipelineConfig cfg = load_or_default(
          config_path, cli_seed, seed_given, stages_override, stages_given, topk_override);
      const SizeArg sz = parse_size(size_text);
      if (sz.h != sz.w) throw ParamError("train: square images required");
      std::vector<winmatch::TrainingBatch> data;
      for (int i = 0; i < num_pairs; ++i)
        data.push_back(winmatch::make_training_batch(winmatch::gen_pair(
            sz.h, sz.w, kind, magnitude, winmatch::mix_seed(cfg.seed, 100 + i), noise)));
      winmatch::Model model =
          winmatch::Model::init(cfg, winmatch::effective_stage_count(cfg.stages, sz.h / 8));
      winmatch::TrainResult tr = winmatch::train_model(model, data, cfg, steps);
      winmatch::save_checkpoint(model, out + ".bin", out + ".manifest.json");
      nlohmann::ordered_json j;
      j["steps"] = steps;
      j["initial_loss"] = tr.initial_loss;
      j["final_loss"] = tr.final_loss;
      j["finite"] = tr.finite;
      j["history"] = tr.history;
      write_text(out + ".train.json", j.dump(2) + "\n");
      std::cout << "initial loss " << tr.initial_loss << ", final loss " << tr.final_loss
                << "\n";
      if (!tr.finite) throw winmatch::NumericError("training produced non-finite values");
    } else if (gradcheck->parsed()) {
      const auto reports = winmatch::run_gradient_suite(seed);
      double worst = 0.0;
      for (const auto& r : reports) {
        std::printf("%-28s probes %3d   max rel err %.3e\n", r.op_name.c_str(),
                    r.probe_count, r.max_rel_error);
        worst = std::max(worst, r.max_rel_error);
      }
      std::printf("worst %.3e (tolerance %.1e)\n", worst, tol);
      if (worst >= tol)
        throw winmatch::NumericError("gradient suite exceeded tolerance");
    } else if (oracle->parsed()) {
      const winmatch::ref::OracleReport r =
          winmatch::ref::run_alg1_oracle_suite(instances, seed);
      std::printf("instances %d   cases %d   max abs diff %.3e\n", r.instances, r.cases,
                  r.max_abs_diff);
      if (r.max_abs_diff > 1e-10)
        throw winmatch::NumericError("attention transcription disagrees with the "
                                     "production path");
    }
    if (timing) std::fprintf(stderr, "elapsed %.1f ms\n", timer.ms());
    return 0;
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  } catch (const winmatch::ParamError& e) {
    std::fprintf(stderr, "parameter error: %s\n", e.what());
    return 2;
  } catch (const winmatch::ShapeError& e) {
    std::fprintf(stderr, "shape error: %s\n", e.what());
    return 2;
  } catch (const winmatch::IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
