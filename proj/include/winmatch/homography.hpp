#pragma once

#include <cstdint>
#include <vector>

#include "winmatch/image.hpp"

namespace winmatch {

struct Correspondence {
  double ax = 0, ay = 0;  // pixels in image A
  double bx = 0, by = 0;  // pixels in image B
};

// Direct linear transform from at least four correspondences, solved via the
// smallest eigenvector of A^T A after Hartley normalization of both point
// sets. Throws NumericError on degenerate configurations.
Homography estimate_homography_dlt(const std::vector<Correspondence>& pts);

struct RansacResult {
  Homography h;
  std::vector<int> inliers;  // indices into the input list
  int iterations = 0;
};

// Classic four-point RANSAC with symmetric-free forward reprojection error,
// a collinearity guard on the minimal sample, and a final least-squares
// refit on the best inlier set.
RansacResult estimate_homography_ransac(const std::vector<Correspondence>& pts,
                                        int iterations, double inlier_px,
                                        std::uint64_t seed);

double reprojection_error(const Homography& h, const Correspondence& c);

// Largest displacement of the four image corners between the two mappings.
double max_corner_error(const Homography& estimated, const Homography& truth,
                        int img_h, int img_w);

// Mean displacement of the four image corners between the two mappings.
double mean_corner_error(const Homography& estimated, const Homography& truth,
                         int img_h, int img_w);

}  // namespace winmatch
