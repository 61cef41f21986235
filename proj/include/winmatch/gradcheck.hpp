#pragma once

#include <functional>
#include <string>
#include <vector>

#include "winmatch/tensor.hpp"

namespace winmatch {

struct GradReport {
  std::string op_name;
  double max_rel_error = 0.0;
  int probe_count = 0;
};

// Central-difference oracle for reverse-mode gradients.
//
// `f` must map a tensor to a scalar tensor by running the computation under
// test; it is re-invoked for every probe, so it has to read the argument's
// values afresh each call. The analytic gradient comes from one backward()
// sweep; it is then compared against (f(x+h) - f(x-h)) / 2h on up to
// `max_probes` coordinates (a seeded sample when the tensor is larger).
GradReport grad_check(const std::string& name,
                      const std::function<Tensor(const Tensor&)>& f,
                      const Tensor& point, double step = 1e-5,
                      int max_probes = 64, std::uint64_t seed = 0);

// Module-spanning gradient suite used by the CLI and the acceptance tests:
// q/k/v projections, windowed attention, the full attention block, the
// convolutional stem, and the total training loss on a 16x16 instance.
std::vector<GradReport> run_gradient_suite(std::uint64_t seed);

}  // namespace winmatch
