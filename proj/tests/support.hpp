#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kdlab/evalkit.hpp"
#include "kdlab/geometry.hpp"
#include "kdlab/losses.hpp"
#include "kdlab/rng.hpp"
#include "kdlab/tensor.hpp"

namespace testsupport {

using kdlab::Rng;
using kdlab::geom::BoundingBox;
using kdlab::geom::Detection;
using kdlab::loss::LabeledBox;
using kdlab::num::Shape;
using kdlab::num::Tensor;

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool grad = false) {
  std::vector<double> v(kdlab::num::numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(shape, v, grad);
}

// Magnitudes in [0.1, 1] with random sign, away from the kinks of relu/abs.
inline Tensor away_from_zero(const Shape& shape, Rng& rng) {
  std::vector<double> v(kdlab::num::numel(shape));
  for (double& x : v) x = rng.uniform(0.1, 1.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
  return Tensor(shape, v);
}

inline std::vector<double> to_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

// Direct nested-loop convolution, no im2col.
inline std::vector<double> naive_conv(const Tensor& in, const Tensor& k, std::size_t stride, std::size_t pad) {
  const std::size_t ci = in.dim(0), h = in.dim(1), w = in.dim(2);
  const std::size_t co = k.dim(0), kk = k.dim(2);
  const std::size_t oh = (h + 2 * pad - kk) / stride + 1, ow = (w + 2 * pad - kk) / stride + 1;
  std::vector<double> out(co * oh * ow, 0.0);
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (std::size_t c = 0; c < ci; ++c)
          for (std::size_t a = 0; a < kk; ++a)
            for (std::size_t b = 0; b < kk; ++b) {
              const long iy = static_cast<long>(y * stride + a) - static_cast<long>(pad);
              const long ix = static_cast<long>(x * stride + b) - static_cast<long>(pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
              acc += in.at((c * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)) *
                     k.at(((o * ci + c) * kk + a) * kk + b);
            }
        out[(o * oh + y) * ow + x] = acc;
      }
  return out;
}

inline double oracle_iou(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

// Repeatedly takes the best remaining candidate and deletes everything of its
// class that overlaps it by more than the threshold.
inline std::vector<Detection> oracle_nms(std::vector<Detection> dets, double thr) {
  std::vector<bool> alive(dets.size(), true);
  std::vector<Detection> kept;
  for (;;) {
    std::ptrdiff_t best = -1;
    for (std::size_t i = 0; i < dets.size(); ++i) {
      if (!alive[i]) continue;
      if (best < 0 || dets[i].score > dets[static_cast<std::size_t>(best)].score) best = static_cast<std::ptrdiff_t>(i);
    }
    if (best < 0) break;
    const Detection d = dets[static_cast<std::size_t>(best)];
    alive[static_cast<std::size_t>(best)] = false;
    kept.push_back(d);
    for (std::size_t i = 0; i < dets.size(); ++i) {
      if (alive[i] && dets[i].class_index == d.class_index && oracle_iou(dets[i].box, d.box) > thr) alive[i] = false;
    }
  }
  return kept;
}

struct OracleMatch {
  std::vector<bool> tp;
  std::size_t fn = 0;
};

// Processes detections by repeatedly scanning for the highest unprocessed
// score; each scans every ground truth for the best unmatched same-class one.
inline OracleMatch oracle_match(const std::vector<Detection>& dets, const std::vector<LabeledBox>& gts, double thr) {
  OracleMatch r;
  r.tp.assign(dets.size(), false);
  std::vector<bool> done(dets.size(), false), used(gts.size(), false);
  for (std::size_t round = 0; round < dets.size(); ++round) {
    std::size_t d = dets.size();
    for (std::size_t i = 0; i < dets.size(); ++i) {
      if (!done[i] && (d == dets.size() || dets[i].score > dets[d].score)) d = i;
    }
    done[d] = true;
    double best_v = -1.0;
    std::size_t best_g = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || gts[g].class_index != dets[d].class_index) continue;
      const double v = oracle_iou(dets[d].box, gts[g].box);
      if (v >= thr && v > best_v) {
        best_v = v;
        best_g = g;
      }
    }
    if (best_g < gts.size()) {
      used[best_g] = true;
      r.tp[d] = true;
    }
  }
  for (bool u : used) r.fn += u ? 0 : 1;
  return r;
}

inline BoundingBox random_box(Rng& rng, double extent = 40.0, double min_side = 1.0, double max_side = 20.0) {
  const double w = rng.uniform(min_side, max_side), h = rng.uniform(min_side, max_side);
  const double x = rng.uniform(0.0, extent - w), y = rng.uniform(0.0, extent - h);
  return {x, y, x + w, y + h};
}

// Scores drawn from a small set so ties are exercised.
inline std::vector<Detection> random_detections(Rng& rng, std::size_t max_n, std::size_t classes) {
  const auto n = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(max_n)));
  std::vector<Detection> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({random_box(rng, 24.0, 2.0, 12.0),
                   static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(classes) - 1)),
                   static_cast<double>(rng.uniform_int(1, 10)) / 10.0});
  }
  return out;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("kdlab_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testsupport
