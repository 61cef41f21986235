#pragma once

#include <cstdint>
#include <vector>

namespace winmatch::ref {

// Line-by-line transcription of top-k window attention on plain buffers.
// Kept deliberately independent of the tensor library so it can serve as an
// oracle for the production path. All matrices are row-major.
struct Alg1Inputs {
  int h = 0, w = 0, c = 0;
  int side = 0;   // window side s
  int top_k = 0;  // windows gathered per query window
  double temperature = 1.0;
  std::vector<double> x1, x2;          // h*w*c each
  std::vector<double> wq, wk, wv;      // c*c each
  std::vector<double> bq, bk, bv;      // c each
};

std::vector<double> top_k_window_attention(const Alg1Inputs& in);

struct OracleReport {
  int instances = 0;
  int cases = 0;          // (s, top_k) combinations exercised
  double max_abs_diff = 0.0;
};

// Randomized equivalence sweep between the production attention path and the
// transcription above: `instances` seeded draws with h, w <= 8 and c <= 4,
// covering every valid window side and every top-k for each draw.
OracleReport run_alg1_oracle_suite(int instances, std::uint64_t seed);

}  // namespace winmatch::ref
