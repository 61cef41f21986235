#pragma once

#include <string>
#include <vector>

#include "winmatch/image.hpp"
#include "winmatch/matcher.hpp"

namespace winmatch {

// Binary 8-bit PGM (P5). Intensities map linearly between [0, 1] and 0..255.
Image read_pgm(const std::string& path);
void write_pgm(const Image& im, const std::string& path);

// Side-by-side render of both images with match lines, binary PPM (P6).
// Confidence in (0.3, 0.5] draws red, above 0.5 green; weaker matches are
// omitted.
void write_match_overlay(const Image& a, const Image& b,
                         const std::vector<FineMatch>& matches,
                         const std::string& path);

}  // namespace winmatch
