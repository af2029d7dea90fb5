#include "kdlab/boxdist.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "kdlab/ops.hpp"

namespace kdlab::boxdist {

BinLattice::BinLattice(double e_min, double e_max, std::size_t n) : e_min_(e_min), e_max_(e_max) {
  if (n < 2) throw std::invalid_argument("lattice needs at least 2 bins, got " + std::to_string(n));
  if (!(e_min < e_max)) throw std::invalid_argument("lattice range must satisfy e_min < e_max");
  values_.resize(n);
  const double span = e_max - e_min;
  for (std::size_t i = 0; i < n; ++i) {
    values_[i] = e_min + static_cast<double>(i) * span / static_cast<double>(n - 1);
  }
  values_.back() = e_max;
}

void validate(const EdgeDistribution& d) {
  if (d.probs.size() != d.lattice.size()) {
    throw std::invalid_argument("distribution has " + std::to_string(d.probs.size()) + " probabilities for " +
                                std::to_string(d.lattice.size()) + " bins");
  }
  double total = 0.0;
  for (double p : d.probs) {
    if (!(p >= 0.0)) throw std::invalid_argument("negative or NaN probability");
    total += p;
  }
  if (std::fabs(total - 1.0) > 1e-9) throw std::invalid_argument("probabilities do not sum to 1");
}

double decode_expectation(const EdgeDistribution& d) {
  double e = 0.0;
  for (std::size_t i = 0; i < d.probs.size(); ++i) e += d.lattice.value(i) * d.probs[i];
  // Rounding can push a convex combination a hair past the ends.
  return std::clamp(e, d.lattice.e_min(), d.lattice.e_max());
}

EdgeDistribution logits_to_distribution(std::span<const double> edge_logits, const BinLattice& lattice,
                                        double temperature) {
  if (edge_logits.size() != lattice.size()) {
    throw std::invalid_argument("got " + std::to_string(edge_logits.size()) + " logits for " +
                                std::to_string(lattice.size()) + " bins");
  }
  num::NoGradGuard no_tape;
  const num::Tensor logits({edge_logits.size()}, {edge_logits.begin(), edge_logits.end()});
  const num::Tensor p = num::softmax_t(logits, temperature);
  return {lattice, {p.data().begin(), p.data().end()}};
}

EncodedTarget encode_target(double e_star, const BinLattice& lattice) {
  EncodedTarget out{{lattice, std::vector<double>(lattice.size(), 0.0)}, false};
  if (e_star < lattice.e_min() || e_star > lattice.e_max() || std::isnan(e_star)) {
    out.clamped = true;
    e_star = std::isnan(e_star) ? lattice.e_min() : std::clamp(e_star, lattice.e_min(), lattice.e_max());
  }
  const double pos = (e_star - lattice.e_min()) / lattice.step();
  auto lo = static_cast<std::size_t>(std::floor(pos));
  lo = std::min(lo, lattice.size() - 1);
  if (e_star == lattice.value(lo)) {
    out.dist.probs[lo] = 1.0;
    return out;
  }
  if (lo + 1 < lattice.size() && e_star == lattice.value(lo + 1)) {
    out.dist.probs[lo + 1] = 1.0;
    return out;
  }
  // Weights chosen so w_lo*v_lo + w_hi*v_hi reproduces e_star.
  const double v_lo = lattice.value(lo);
  const double v_hi = lattice.value(lo + 1);
  const double w_hi = (e_star - v_lo) / (v_hi - v_lo);
  out.dist.probs[lo] = 1.0 - w_hi;
  out.dist.probs[lo + 1] = w_hi;
  return out;
}

double sharpness(const EdgeDistribution& d) { return *std::max_element(d.probs.begin(), d.probs.end()); }

}  // namespace kdlab::boxdist
