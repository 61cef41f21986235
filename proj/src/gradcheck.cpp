#include "winmatch/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace winmatch {

GradReport grad_check(const std::string& name,
                      const std::function<Tensor(const Tensor&)>& f,
                      const Tensor& point, double step, int max_probes,
                      std::uint64_t seed) {
  if (!(step > 0.0)) throw ParamError("grad_check: step must be positive");
  Tensor x = Tensor::from(point.shape, *point.data, true);

  Tensor loss = f(x);
  if (loss.numel() != 1)
    throw ContractError("grad_check: function under test must produce a scalar");
  backward(loss);
  const std::vector<double> analytic = *x.grad;

  // Pick probe coordinates: everything for small tensors, a seeded sample
  // otherwise.
  const std::size_t n = x.numel();
  std::vector<std::size_t> coords;
  if (n <= static_cast<std::size_t>(max_probes)) {
    for (std::size_t i = 0; i < n; ++i) coords.push_back(i);
  } else {
    Rng rng(mix_seed(seed, 0xc0ffee));
    std::unordered_set<std::size_t> taken;
    while (coords.size() < static_cast<std::size_t>(max_probes)) {
      std::size_t i = static_cast<std::size_t>(rng.next_u64() % n);
      if (taken.insert(i).second) coords.push_back(i);
    }
    std::sort(coords.begin(), coords.end());
  }

  GradReport report{name, 0.0, static_cast<int>(coords.size())};
  NoGradGuard ng;
  for (std::size_t i : coords) {
    const double saved = (*x.data)[i];
    (*x.data)[i] = saved + step;
    const double fp = f(x).value();
    (*x.data)[i] = saved - step;
    const double fm = f(x).value();
    (*x.data)[i] = saved;
    const double fd = (fp - fm) / (2.0 * step);
    const double a = analytic[i];
    const double rel =
        std::fabs(a - fd) / std::max({1e-6, std::fabs(a), std::fabs(fd)});
    report.max_rel_error = std::max(report.max_rel_error, rel);
  }
  return report;
}

}  // namespace winmatch
