#include "winmatch/homography.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "winmatch/rng.hpp"

namespace winmatch {

Homography Homography::translation(double tx, double ty) {
  Homography h;
  h.m = {1, 0, tx, 0, 1, ty, 0, 0, 1};
  return h;
}

Homography Homography::rotation_about(double cx, double cy, double degrees) {
  const double rad = degrees * M_PI / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  Homography h;
  // Translate center to origin, rotate, translate back.
  h.m = {c, -s, cx - c * cx + s * cy,
         s, c,  cy - s * cx - c * cy,
         0, 0,  1};
  return h;
}

std::array<double, 2> Homography::apply(double x, double y) const {
  const double u = m[0] * x + m[1] * y + m[2];
  const double v = m[3] * x + m[4] * y + m[5];
  const double w = m[6] * x + m[7] * y + m[8];
  if (std::fabs(w) < 1e-12)
    throw NumericError("homography: point maps to the line at infinity");
  return {u / w, v / w};
}

Homography Homography::inverse() const {
  const auto& a = m;
  std::array<double, 9> adj{
      a[4] * a[8] - a[5] * a[7], a[2] * a[7] - a[1] * a[8], a[1] * a[5] - a[2] * a[4],
      a[5] * a[6] - a[3] * a[8], a[0] * a[8] - a[2] * a[6], a[2] * a[3] - a[0] * a[5],
      a[3] * a[7] - a[4] * a[6], a[1] * a[6] - a[0] * a[7], a[0] * a[4] - a[1] * a[3]};
  const double det = a[0] * adj[0] + a[1] * adj[3] + a[2] * adj[6];
  if (std::fabs(det) < 1e-15) throw NumericError("homography: singular matrix");
  Homography inv;
  for (int i = 0; i < 9; ++i) inv.m[i] = adj[i] / det;
  inv.normalize();
  return inv;
}

void Homography::normalize() {
  if (std::fabs(m[8]) < 1e-12)
    throw NumericError("homography: cannot normalize, m[2][2] is zero");
  const double s = 1.0 / m[8];
  for (double& v : m) v *= s;
}

double sample_bilinear(const Image& im, double x, double y) {
  const double gx = x - 0.5, gy = y - 0.5;
  const double fx0 = std::floor(gx), fy0 = std::floor(gy);
  const int x0 = static_cast<int>(fx0), y0 = static_cast<int>(fy0);
  const double ax = gx - fx0, ay = gy - fy0;
  auto px = [&](int r, int c) -> double {
    if (r < 0 || c < 0 || r >= im.h || c >= im.w) return 0.0;
    return im.at(r, c);
  };
  const double top = (1.0 - ax) * px(y0, x0) + ax * px(y0, x0 + 1);
  const double bot = (1.0 - ax) * px(y0 + 1, x0) + ax * px(y0 + 1, x0 + 1);
  return (1.0 - ay) * top + ay * bot;
}

Image warp_image(const Image& src, const Homography& h) {
  const Homography inv = h.inverse();
  Image out = Image::zeros(src.h, src.w);
  for (int r = 0; r < src.h; ++r)
    for (int c = 0; c < src.w; ++c) {
      const auto p = inv.apply(c + 0.5, r + 0.5);
      out.at(r, c) = sample_bilinear(src, p[0], p[1]);
    }
  return out;
}

namespace {

struct PointNorm {
  double cx = 0, cy = 0, s = 1;  // similarity: p' = s * (p - centroid)
};

PointNorm normalizer(const std::vector<Correspondence>& pts, bool side_b) {
  PointNorm n;
  for (const auto& c : pts) {
    n.cx += side_b ? c.bx : c.ax;
    n.cy += side_b ? c.by : c.ay;
  }
  n.cx /= pts.size();
  n.cy /= pts.size();
  double mean_dist = 0;
  for (const auto& c : pts) {
    const double dx = (side_b ? c.bx : c.ax) - n.cx;
    const double dy = (side_b ? c.by : c.ay) - n.cy;
    mean_dist += std::sqrt(dx * dx + dy * dy);
  }
  mean_dist /= pts.size();
  n.s = mean_dist > 1e-12 ? std::sqrt(2.0) / mean_dist : 1.0;
  return n;
}

bool has_collinear_triple(const double (*p)[2], int n) {
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      for (int k = j + 1; k < n; ++k) {
        const double area = (p[j][0] - p[i][0]) * (p[k][1] - p[i][1]) -
                            (p[j][1] - p[i][1]) * (p[k][0] - p[i][0]);
        if (std::fabs(area) < 1e-9) return true;
      }
  return false;
}

}  // namespace

Homography estimate_homography_dlt(const std::vector<Correspondence>& pts) {
  const int n = static_cast<int>(pts.size());
  if (n < 4) throw ParamError("homography fit needs at least four correspondences");

  const PointNorm na = normalizer(pts, false);
  const PointNorm nb = normalizer(pts, true);

  Eigen::MatrixXd A(2 * n, 9);
  for (int i = 0; i < n; ++i) {
    const double x = na.s * (pts[i].ax - na.cx);
    const double y = na.s * (pts[i].ay - na.cy);
    const double u = nb.s * (pts[i].bx - nb.cx);
    const double v = nb.s * (pts[i].by - nb.cy);
    A.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    A.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }

  Eigen::Matrix<double, 9, 9> ata = A.transpose() * A;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 9, 9>> solver(ata);
  if (solver.info() != Eigen::Success)
    throw NumericError("homography fit: eigensolver failed");
  Eigen::Matrix<double, 9, 1> hvec = solver.eigenvectors().col(0);

  // Denormalize: H = Tb^-1 * Hn * Ta with Ta, Tb the similarity transforms.
  Eigen::Matrix3d hn;
  hn << hvec(0), hvec(1), hvec(2), hvec(3), hvec(4), hvec(5), hvec(6), hvec(7), hvec(8);
  Eigen::Matrix3d ta, tb_inv;
  ta << na.s, 0, -na.s * na.cx, 0, na.s, -na.s * na.cy, 0, 0, 1;
  tb_inv << 1.0 / nb.s, 0, nb.cx, 0, 1.0 / nb.s, nb.cy, 0, 0, 1;
  Eigen::Matrix3d hm = tb_inv * hn * ta;

  Homography h;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) h.m[r * 3 + c] = hm(r, c);
  h.normalize();
  return h;
}

double reprojection_error(const Homography& h, const Correspondence& c) {
  const auto p = h.apply(c.ax, c.ay);
  const double dx = p[0] - c.bx, dy = p[1] - c.by;
  return std::sqrt(dx * dx + dy * dy);
}

RansacResult estimate_homography_ransac(const std::vector<Correspondence>& pts,
                                        int iterations, double inlier_px,
                                        std::uint64_t seed) {
  const int n = static_cast<int>(pts.size());
  if (n < 4) throw ParamError("homography fit needs at least four correspondences");
  if (iterations < 1) throw ParamError("ransac: need at least one iteration");
  if (!(inlier_px > 0)) throw ParamError("ransac: inlier radius must be positive");

  Rng rng(seed);
  RansacResult best;
  bool have_best = false;

  for (int it = 0; it < iterations; ++it) {
    int pick[4];
    bool distinct = true;
    for (int s = 0; s < 4; ++s) {
      pick[s] = rng.uniform_int(0, n - 1);
      for (int t = 0; t < s; ++t) distinct = distinct && pick[t] != pick[s];
    }
    if (!distinct) continue;

    double pa[4][2], pb[4][2];
    std::vector<Correspondence> minimal(4);
    for (int s = 0; s < 4; ++s) {
      minimal[s] = pts[pick[s]];
      pa[s][0] = minimal[s].ax;
      pa[s][1] = minimal[s].ay;
      pb[s][0] = minimal[s].bx;
      pb[s][1] = minimal[s].by;
    }
    if (has_collinear_triple(pa, 4) || has_collinear_triple(pb, 4)) continue;

    Homography cand;
    try {
      cand = estimate_homography_dlt(minimal);
    } catch (const NumericError&) {
      continue;
    }

    std::vector<int> inliers;
    for (int i = 0; i < n; ++i)
      if (reprojection_error(cand, pts[i]) < inlier_px) inliers.push_back(i);

    if (!have_best || inliers.size() > best.inliers.size()) {
      best.h = cand;
      best.inliers = std::move(inliers);
      have_best = true;
    }
  }
  if (!have_best)
    throw NumericError("ransac: no non-degenerate minimal sample found");

  best.iterations = iterations;
  if (best.inliers.size() >= 4) {
    std::vector<Correspondence> kept;
    kept.reserve(best.inliers.size());
    for (int i : best.inliers) kept.push_back(pts[i]);
    try {
      Homography refit = estimate_homography_dlt(kept);
      std::vector<int> re_inliers;
      for (int i = 0; i < n; ++i)
        if (reprojection_error(refit, pts[i]) < inlier_px) re_inliers.push_back(i);
      if (re_inliers.size() >= best.inliers.size()) {
        best.h = refit;
        best.inliers = std::move(re_inliers);
      }
    } catch (const NumericError&) {
      // Keep the minimal-sample fit.
    }
  }
  return best;
}

double max_corner_error(const Homography& estimated, const Homography& truth,
                        int img_h, int img_w) {
  const double xs[4] = {0.0, double(img_w), 0.0, double(img_w)};
  const double ys[4] = {0.0, 0.0, double(img_h), double(img_h)};
  double worst = 0.0;
  for (int i = 0; i < 4; ++i) {
    const auto pe = estimated.apply(xs[i], ys[i]);
    const auto pt = truth.apply(xs[i], ys[i]);
    const double dx = pe[0] - pt[0], dy = pe[1] - pt[1];
    worst = std::max(worst, std::sqrt(dx * dx + dy * dy));
  }
  return worst;
}

double mean_corner_error(const Homography& estimated, const Homography& truth,
                         int img_h, int img_w) {
  const double xs[4] = {0.0, double(img_w), 0.0, double(img_w)};
  const double ys[4] = {0.0, 0.0, double(img_h), double(img_h)};
  double total = 0.0;
  for (int i = 0; i < 4; ++i) {
    const auto pe = estimated.apply(xs[i], ys[i]);
    const auto pt = truth.apply(xs[i], ys[i]);
    const double dx = pe[0] - pt[0], dy = pe[1] - pt[1];
    total += std::sqrt(dx * dx + dy * dy);
  }
  return total / 4.0;
}

}  // namespace winmatch
