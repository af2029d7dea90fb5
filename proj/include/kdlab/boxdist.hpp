#pragma once

#include <cstddef>
#include <span>
#include <vector>

// Discrete probability representation of a single box edge. The continuous
// regression range [e_min, e_max] is quantized into n uniformly spaced
// values; an edge is predicted as the expectation over that lattice.
namespace kdlab::boxdist {

class BinLattice {
 public:
  // Throws std::invalid_argument unless n >= 2 and e_min < e_max.
  BinLattice(double e_min, double e_max, std::size_t n);

  // Default lattice: {0, 1, ..., n-1}, in feature-map stride units.
  static BinLattice unit(std::size_t n) { return BinLattice(0.0, static_cast<double>(n - 1), n); }

  double e_min() const { return e_min_; }
  double e_max() const { return e_max_; }
  std::size_t size() const { return values_.size(); }
  double step() const { return (e_max_ - e_min_) / static_cast<double>(values_.size() - 1); }
  double value(std::size_t i) const { return values_[i]; }
  const std::vector<double>& values() const { return values_; }

 private:
  double e_min_;
  double e_max_;
  std::vector<double> values_;
};

struct EdgeDistribution {
  BinLattice lattice;
  std::vector<double> probs;
};

struct EncodedTarget {
  EdgeDistribution dist;
  bool clamped = false;  // the requested value fell outside [e_min, e_max]
};

// Throws std::invalid_argument if probs has the wrong length, a negative
// entry, or does not sum to 1 within 1e-9.
void validate(const EdgeDistribution& d);

double decode_expectation(const EdgeDistribution& d);

// probs = softmax(edge_logits / T). Throws std::invalid_argument on T <= 0 or
// a length mismatch.
EdgeDistribution logits_to_distribution(std::span<const double> edge_logits, const BinLattice& lattice,
                                        double temperature);

// Dirac on a lattice value; otherwise linear-interpolation mass on the two
// neighbouring bins so the expectation reproduces e_star. Out-of-range values
// are clamped and flagged.
EncodedTarget encode_target(double e_star, const BinLattice& lattice);

// max(probs): 1 for a Dirac, 1/n for the uniform distribution.
double sharpness(const EdgeDistribution& d);

}  // namespace kdlab::boxdist
