#include "winmatch/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "winmatch/homography.hpp"

namespace winmatch {

Image band_limited_texture(int h, int w, Rng& rng, int cell) {
  if (h <= 0 || w <= 0) throw ParamError("texture: extents must be positive");
  if (cell < 1) throw ParamError("texture: cell must be positive");

  // White noise on coarse grid nodes spaced `cell` pixels apart.
  const int nh = h / cell + 2, nw = w / cell + 2;
  std::vector<double> nodes(static_cast<std::size_t>(nh) * nw);
  for (double& v : nodes) v = rng.normal();

  Image up = Image::zeros(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const double gy = (r + 0.5) / cell, gx = (c + 0.5) / cell;
      const int y0 = std::min(static_cast<int>(gy), nh - 2);
      const int x0 = std::min(static_cast<int>(gx), nw - 2);
      const double fy = gy - y0, fx = gx - x0;
      const double top = (1 - fx) * nodes[y0 * nw + x0] + fx * nodes[y0 * nw + x0 + 1];
      const double bot =
          (1 - fx) * nodes[(y0 + 1) * nw + x0] + fx * nodes[(y0 + 1) * nw + x0 + 1];
      up.at(r, c) = (1 - fy) * top + fy * bot;
    }

  // 3x3 box smoothing with clamped borders.
  Image sm = Image::zeros(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double acc = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int rr = std::clamp(r + dy, 0, h - 1);
          const int cc = std::clamp(c + dx, 0, w - 1);
          acc += up.at(rr, cc);
        }
      sm.at(r, c) = acc / 9.0;
    }

  double lo = sm.px[0], hi = sm.px[0];
  for (double v : sm.px) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi - lo;
  for (double& v : sm.px) v = span > 1e-12 ? (v - lo) / span : 0.5;
  return sm;
}

SyntheticPair gen_pair(int h, int w, const std::string& kind, double magnitude,
                       std::uint64_t seed, double noise) {
  if (h <= 0 || w <= 0) throw ParamError("gen_pair: extents must be positive");
  if (magnitude < 0) throw ParamError("gen_pair: magnitude must be non-negative");
  if (noise < 0) throw ParamError("gen_pair: noise must be non-negative");

  Rng rng_params(mix_seed(seed, 0));
  Rng rng_texture(mix_seed(seed, 1));
  Rng rng_noise(mix_seed(seed, 2));

  SyntheticPair out;
  out.kind = kind;
  // 2 px cells keep descriptor patches well away from the low-dimensional
  // ramp family that coarser fields degenerate into, so patches stay
  // individually identifiable.
  out.a = band_limited_texture(h, w, rng_texture, 2);

  if (kind == "translate") {
    out.h = Homography::translation(magnitude, 0.0);
  } else if (kind == "rotate") {
    out.h = Homography::rotation_about(w / 2.0, h / 2.0, magnitude);
  } else if (kind == "homography") {
    std::vector<Correspondence> corners(4);
    const double xs[4] = {0, double(w), 0, double(w)};
    const double ys[4] = {0, 0, double(h), double(h)};
    for (int i = 0; i < 4; ++i) {
      corners[i].ax = xs[i];
      corners[i].ay = ys[i];
      corners[i].bx = xs[i] + rng_params.uniform() * 2 * magnitude - magnitude;
      corners[i].by = ys[i] + rng_params.uniform() * 2 * magnitude - magnitude;
    }
    out.h = estimate_homography_dlt(corners);
  } else if (kind == "lowtexture") {
    for (double& v : out.a.px) v = 0.5 + (v - 0.5) * 0.1;
    out.h = Homography::translation(magnitude, 0.0);
  } else {
    throw ParamError("gen_pair: unknown kind '" + kind + "'");
  }

  out.b = warp_image(out.a, out.h);

  if (noise > 0) {
    for (double& v : out.a.px) v = std::clamp(v + rng_noise.normal() * noise, 0.0, 1.0);
    for (double& v : out.b.px) v = std::clamp(v + rng_noise.normal() * noise, 0.0, 1.0);
  }
  return out;
}

GroundTruth synthetic_ground_truth(const Homography& h, int img_h, int img_w) {
  if (img_h % 8 || img_w % 8)
    throw PartitionError("ground truth: extents must be multiples of 8");
  const int gh = img_h / 8, gw = img_w / 8;
  GroundTruth gt;
  for (int r = 0; r < gh; ++r)
    for (int c = 0; c < gw; ++c) {
      const auto center = h.apply(8 * c + 4.0, 8 * r + 4.0);
      if (center[0] < 0 || center[0] >= img_w || center[1] < 0 || center[1] >= img_h)
        continue;
      const int bj = std::min(static_cast<int>(center[0] / 8), gw - 1);
      const int bi = std::min(static_cast<int>(center[1] / 8), gh - 1);
      gt.coarse.push_back({r * gw + c, bi * gw + bj});
      // Subpixel target: where the patch's refinement anchor truly lands.
      const auto anchor = h.apply(8 * c + 5.0, 8 * r + 5.0);
      gt.fine_targets.push_back({anchor[0], anchor[1]});
    }
  return gt;
}

}  // namespace winmatch
