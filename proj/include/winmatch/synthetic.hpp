#pragma once

#include <cstdint>
#include <string>

#include "winmatch/image.hpp"
#include "winmatch/loss.hpp"
#include "winmatch/rng.hpp"

namespace winmatch {

// One generated supervision pair: b is a warped (and optionally noisy) view
// of a, and h maps pixel coordinates of A onto B.
struct SyntheticPair {
  Image a, b;
  Homography h;
  std::string kind;
};

// Band-limited random texture: white noise laid out on a coarse cell grid,
// bilinearly upsampled and box-smoothed, normalized to [0, 1]. `cell` is the
// coarse cell side in pixels.
Image band_limited_texture(int h, int w, Rng& rng, int cell = 2);

// Deterministically generates a pair from the seed. Kinds:
//   translate  - shift right by `magnitude` pixels (x only)
//   rotate     - rotate about the image center by `magnitude` degrees
//   homography - perturb each corner by up to `magnitude` pixels
//   lowtexture - translate geometry at one tenth of the usual contrast
// `noise` is the stdev of additive Gaussian noise applied to both images.
SyntheticPair gen_pair(int h, int w, const std::string& kind, double magnitude,
                       std::uint64_t seed, double noise = 0.0);

// Supervision on the 1/8 patch grid: patch i of A pairs with the B patch its
// center lands in; the subpixel target is the mapped position of the patch's
// refinement anchor (the center cell of its 1/2-scale block). Pairs whose
// center leaves B are omitted.
GroundTruth synthetic_ground_truth(const Homography& h, int img_h, int img_w);

}  // namespace winmatch
