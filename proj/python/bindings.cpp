// Python bindings for the matching core. Values cross the boundary as plain
// nested lists so the module has no third-party runtime dependencies.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "winmatch/config.hpp"
#include "winmatch/homography.hpp"
#include "winmatch/matcher.hpp"
#include "winmatch/model.hpp"
#include "winmatch/synthetic.hpp"
#include "winmatch/train.hpp"
#include "winmatch/window_attention.hpp"

namespace py = pybind11;
using namespace winmatch;

namespace {

using Grid = std::vector<std::vector<double>>;             // image: h rows of w
using Map3 = std::vector<std::vector<std::vector<double>>>;  // feature map h*w*c

Image image_from(const Grid& rows) {
  if (rows.empty() || rows[0].empty()) throw ParamError("image must be non-empty");
  Image im = Image::zeros(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (int r = 0; r < im.h; ++r) {
    if (static_cast<int>(rows[r].size()) != im.w)
      throw ParamError("image rows must all have the same length");
    for (int c = 0; c < im.w; ++c) im.at(r, c) = rows[r][c];
  }
  return im;
}

Grid image_to(const Image& im) {
  Grid rows(im.h, std::vector<double>(im.w));
  for (int r = 0; r < im.h; ++r)
    for (int c = 0; c < im.w; ++c) rows[r][c] = im.at(r, c);
  return rows;
}

Tensor map_from(const Map3& m) {
  if (m.empty() || m[0].empty() || m[0][0].empty())
    throw ParamError("feature map must be non-empty");
  const int h = static_cast<int>(m.size());
  const int w = static_cast<int>(m[0].size());
  const int c = static_cast<int>(m[0][0].size());
  Tensor t = Tensor::zeros({h, w, c});
  for (int r = 0; r < h; ++r) {
    if (static_cast<int>(m[r].size()) != w)
      throw ParamError("feature map rows must all have the same length");
    for (int col = 0; col < w; ++col) {
      if (static_cast<int>(m[r][col].size()) != c)
        throw ParamError("feature map cells must all have the same depth");
      for (int d = 0; d < c; ++d) t.at(r, col, d) = m[r][col][d];
    }
  }
  return t;
}

Map3 map_to(const Tensor& t) {
  if (t.rank() != 3) throw ShapeError("expected a rank-3 map");
  Map3 m(t.shape[0], std::vector<std::vector<double>>(
                         t.shape[1], std::vector<double>(t.shape[2])));
  for (int r = 0; r < t.shape[0]; ++r)
    for (int col = 0; col < t.shape[1]; ++col)
      for (int d = 0; d < t.shape[2]; ++d) m[r][col][d] = t.at(r, col, d);
  return m;
}

Grid matrix_to(const Tensor& t) {
  if (t.rank() != 2) throw ShapeError("expected a rank-2 matrix");
  Grid m(t.shape[0], std::vector<double>(t.shape[1]));
  for (int r = 0; r < t.shape[0]; ++r)
    for (int c = 0; c < t.shape[1]; ++c) m[r][c] = t.at(r, c);
  return m;
}

Tensor matrix_from(const Grid& m) {
  if (m.empty() || m[0].empty()) throw ParamError("matrix must be non-empty");
  const int rows = static_cast<int>(m.size()), cols = static_cast<int>(m[0].size());
  Tensor t = Tensor::zeros({rows, cols});
  for (int r = 0; r < rows; ++r) {
    if (static_cast<int>(m[r].size()) != cols)
      throw ParamError("matrix rows must all have the same length");
    for (int c = 0; c < cols; ++c) t.at(r, c) = m[r][c];
  }
  return t;
}

PipelineConfig make_config(const std::string& features, std::uint64_t seed, int stages,
                           const std::string& topk_schedule, double match_threshold) {
  PipelineConfig cfg;
  cfg.features = features;
  cfg.seed = seed;
  cfg.stages = stages;
  cfg.topk_schedule = topk_schedule;
  cfg.match_threshold = match_threshold;
  cfg.validate();
  return cfg;
}

py::dict match_set_to_dict(const MatchSet& ms) {
  py::dict out;
  out["num_coarse"] = ms.coarse.size();
  out["num_fine"] = ms.fine.size();
  out["dropped_at_margin"] = ms.dropped_at_margin;
  py::list coarse;
  for (const CoarseMatch& m : ms.coarse)
    coarse.append(py::make_tuple(m.a, m.b, m.confidence));
  out["coarse"] = coarse;
  py::list fine;
  for (const FineMatch& m : ms.fine) {
    py::dict e;
    e["ax"] = m.ax;
    e["ay"] = m.ay;
    e["bx"] = m.bx;
    e["by"] = m.by;
    e["confidence"] = m.confidence;
    e["sigma2"] = m.sigma2;
    fine.append(e);
  }
  out["matches"] = fine;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Feature matching with top-k window attention: synthetic pair "
            "generation, the matching pipeline, window partition utilities and "
            "homography fitting.";

  m.def(
      "gen_pair",
      [](int h, int w, const std::string& kind, double magnitude, std::uint64_t seed,
         double noise) {
        SyntheticPair pair = gen_pair(h, w, kind, magnitude, seed, noise);
        py::dict out;
        out["a"] = image_to(pair.a);
        out["b"] = image_to(pair.b);
        out["homography"] = pair.h.m;
        out["kind"] = pair.kind;
        return out;
      },
      py::arg("h"), py::arg("w"), py::arg("kind"), py::arg("magnitude"), py::arg("seed"),
      py::arg("noise") = 0.0,
      "Generate a synthetic image pair (translate | rotate | homography | "
      "lowtexture) plus the pixel mapping from A to B as a row-major 3x3 list.");

  m.def(
      "match_pair",
      [](const Grid& a, const Grid& b, const std::string& features, std::uint64_t seed,
         int stages, const std::string& topk_schedule, double match_threshold,
         const std::string& checkpoint) {
        PipelineConfig cfg =
            make_config(features, seed, stages, topk_schedule, match_threshold);
        Image im_a = image_from(a), im_b = image_from(b);
        Model model;
        const Model* model_ptr = nullptr;
        if (cfg.features == "learned") {
          if (checkpoint.empty()) {
            model = Model::init(cfg, effective_stage_count(cfg.stages, im_a.h / 8));
          } else {
            model = load_checkpoint(cfg, checkpoint + ".bin",
                                    checkpoint + ".manifest.json");
          }
          model_ptr = &model;
        }
        return match_set_to_dict(match_pipeline(im_a, im_b, cfg, model_ptr));
      },
      py::arg("a"), py::arg("b"), py::arg("features") = "handcrafted",
      py::arg("seed") = 7, py::arg("stages") = 4, py::arg("topk_schedule") = "auto",
      py::arg("match_threshold") = 0.2, py::arg("checkpoint") = "",
      "Run the full matching pipeline on two equal-size square grayscale images "
      "(extents multiples of 16, intensities in [0, 1]). `checkpoint` names a "
      "saved prefix for learned features; empty means a fresh seeded model.");

  m.def(
      "estimate_homography",
      [](const std::vector<std::vector<double>>& points, const std::string& method,
         int iterations, double inlier_px, std::uint64_t seed) {
        std::vector<Correspondence> pts;
        for (const auto& p : points) {
          if (p.size() != 4)
            throw ParamError("each correspondence needs 4 values: ax, ay, bx, by");
          pts.push_back({p[0], p[1], p[2], p[3]});
        }
        py::dict out;
        if (method == "direct") {
          Homography h = estimate_homography_dlt(pts);
          out["h"] = h.m;
          std::vector<int> all(pts.size());
          for (std::size_t i = 0; i < pts.size(); ++i) all[i] = static_cast<int>(i);
          out["inliers"] = all;
        } else if (method == "ransac") {
          RansacResult rr = estimate_homography_ransac(pts, iterations, inlier_px, seed);
          out["h"] = rr.h.m;
          out["inliers"] = rr.inliers;
        } else {
          throw ParamError("method must be 'direct' or 'ransac'");
        }
        return out;
      },
      py::arg("points"), py::arg("method") = "ransac", py::arg("iterations") = 1000,
      py::arg("inlier_px") = 3.0, py::arg("seed") = 0,
      "Fit a plane homography to [ax, ay, bx, by] correspondences, either the "
      "direct least-squares fit or the outlier-robust sampling fit.");

  m.def(
      "interaction_schedule",
      [](int stages) {
        std::vector<std::pair<int, int>> out;
        for (const Stage& s : interaction_schedule(stages))
          out.emplace_back(s.num_windows, s.top_k);
        return out;
      },
      py::arg("stages"),
      "Per-stage (num_windows, top_k) of the coarse-to-fine interaction ladder.");

  m.def(
      "window_partition",
      [](const Map3& f, int side) {
        Tensor t = map_from(f);
        WindowedFeatures wf = window_partition(t, side);
        std::vector<Grid> windows(wf.ctx.windows());
        for (int wdw = 0; wdw < wf.ctx.windows(); ++wdw) {
          Grid rows(wf.ctx.patches_per_window(), std::vector<double>(t.shape[2]));
          for (int p = 0; p < wf.ctx.patches_per_window(); ++p)
            for (int d = 0; d < t.shape[2]; ++d) rows[p][d] = wf.data.at(wdw, p, d);
          windows[wdw] = rows;
        }
        return windows;
      },
      py::arg("f"), py::arg("side"),
      "Rearrange an [h][w][c] map into per-window patch lists "
      "[windows][side*side][c]; windows and patches are row-major.");

  m.def(
      "window_reverse",
      [](const std::vector<Grid>& windows, int h, int w) {
        if (windows.empty() || windows[0].empty() || windows[0][0].empty())
          throw ParamError("windows must be non-empty");
        const int n = static_cast<int>(windows.size());
        const int ppw = static_cast<int>(windows[0].size());
        const int c = static_cast<int>(windows[0][0].size());
        const int side = static_cast<int>(std::lround(std::sqrt(double(ppw))));
        if (side * side != ppw)
          throw ParamError("each window must hold side*side patch rows");
        WindowedFeatures wf;
        wf.ctx = WindowContext::make(h, w, side, 1);
        if (wf.ctx.windows() != n) throw ParamError("window count does not match h, w");
        wf.data = Tensor::zeros({n, ppw, c});
        for (int wdw = 0; wdw < n; ++wdw)
          for (int p = 0; p < ppw; ++p)
            for (int d = 0; d < c; ++d) wf.data.at(wdw, p, d) = windows[wdw][p][d];
        return map_to(window_reverse(wf, h, w));
      },
      py::arg("windows"), py::arg("h"), py::arg("w"),
      "Exact inverse of window_partition back to an [h][w][c] map.");

  m.def(
      "top_k_window_attention",
      [](const Map3& x1, const Map3& x2, int side, int top_k, double temperature) {
        Tensor t1 = map_from(x1), t2 = map_from(x2);
        if (t1.shape != t2.shape) throw ShapeError("x1 and x2 must share a shape");
        WindowContext ctx = WindowContext::make(t1.shape[0], t1.shape[1], side, top_k);
        AttentionParams p = AttentionParams::identity(t1.shape[2]);
        return map_to(top_k_window_attention(t1, t2, ctx, p, temperature));
      },
      py::arg("x1"), py::arg("x2"), py::arg("side"), py::arg("top_k"),
      py::arg("temperature") = 1.0,
      "Window attention with identity q/k/v maps: queries from x1 attend to "
      "their top-k windows of x2 plus every window summary.");

  m.def(
      "patch_confidence",
      [](const Map3& ga, const Map3& gb, double temperature) {
        return matrix_to(patch_confidence(map_from(ga), map_from(gb), temperature));
      },
      py::arg("ga"), py::arg("gb"), py::arg("temperature") = 0.1,
      "Dual-softmax confidence between two descriptor grids, flattened row-major "
      "to [h*w][h*w].");

  m.def(
      "mutual_nn",
      [](const Grid& confidence, double threshold) {
        std::vector<std::tuple<int, int, double>> out;
        for (const CoarseMatch& m : mutual_nn_select(matrix_from(confidence), threshold))
          out.emplace_back(m.a, m.b, m.confidence);
        return out;
      },
      py::arg("confidence"), py::arg("threshold") = 0.2,
      "Mutually-best (row, col, confidence) entries above the confidence floor.");
}
