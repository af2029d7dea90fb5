#include "kdlab/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace kdlab::num {

double finite_diff_check(const ScalarFn& f, const Tensor& x, double eps) {
  const std::vector<double> base(x.data().begin(), x.data().end());

  Tensor probe(x.shape(), base, true);
  f(probe).backward();
  std::vector<double> analytic(base.size(), 0.0);
  if (probe.has_grad()) std::copy(probe.grad().begin(), probe.grad().end(), analytic.begin());

  NoGradGuard no_tape;
  double worst = 0.0;
  std::vector<double> shifted = base;
  for (std::size_t i = 0; i < base.size(); ++i) {
    shifted[i] = base[i] + eps;
    const double up = f(Tensor(x.shape(), shifted)).item();
    shifted[i] = base[i] - eps;
    const double down = f(Tensor(x.shape(), shifted)).item();
    shifted[i] = base[i];
    const double numeric = (up - down) / (2.0 * eps);
    worst = std::max(worst, std::fabs(analytic[i] - numeric) / std::max(1.0, std::fabs(analytic[i])));
  }
  return worst;
}

}  // namespace kdlab::num
