#pragma once

#include <array>
#include <vector>

#include "winmatch/errors.hpp"

namespace winmatch {

// Grayscale image, row-major, intensities in [0, 1]. Pixel (r, c) covers the
// continuous square [c, c+1) x [r, r+1); its center is (c + 0.5, r + 0.5).
struct Image {
  int h = 0, w = 0;
  std::vector<double> px;

  static Image zeros(int h, int w) {
    if (h <= 0 || w <= 0) throw ParamError("image extents must be positive");
    Image im;
    im.h = h;
    im.w = w;
    im.px.assign(static_cast<std::size_t>(h) * w, 0.0);
    return im;
  }
  double& at(int r, int c) { return px[static_cast<std::size_t>(r) * w + c]; }
  double at(int r, int c) const { return px[static_cast<std::size_t>(r) * w + c]; }
};

// Plane homography, row-major 3x3 acting on (x, y, 1) column points with
// x = column and y = row, both in pixels. m[8] is kept at 1.
struct Homography {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Homography identity() { return Homography{}; }
  static Homography translation(double tx, double ty);
  static Homography rotation_about(double cx, double cy, double degrees);

  std::array<double, 2> apply(double x, double y) const;
  Homography inverse() const;
  void normalize();  // rescale so m[8] == 1
};

// Bilinear sample at continuous coordinates (pixel-center convention).
// Returns 0 outside the image support.
double sample_bilinear(const Image& im, double x, double y);

// Inverse-warps `src` through H: out(p) = src(H^-1 p).
Image warp_image(const Image& src, const Homography& h);

}  // namespace winmatch
