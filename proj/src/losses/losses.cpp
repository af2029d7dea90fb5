#include "kdlab/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "kdlab/ops.hpp"

namespace kdlab::loss {

using num::Tensor;

std::vector<double> GridRegionWeights::flatten() const {
  std::vector<double> out;
  for (const RegionGrid& g : scales) out.insert(out.end(), g.values.begin(), g.values.end());
  return out;
}

void DistillConfig::validate() const {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("gamma must lie in [0, 1]");
  if (epsilon < 0.0) throw std::invalid_argument("epsilon must be nonnegative");
  if (lambda_cls < 0.0 || lambda_loc_sup < 0.0 || lambda_loc_kd < 0.0) {
    throw std::invalid_argument("loss weights must be nonnegative");
  }
  if (!(elr_decay > 0.0 && elr_decay < 1.0)) throw std::invalid_argument("elr_decay must lie in (0, 1)");
}

DistillConfig DistillConfig::baseline() {
  DistillConfig c;
  c.gamma = 0.0;
  c.epsilon = 0.0;
  c.lambda_loc_kd = 0.0;
  return c;
}

std::size_t AssignedTargets::positives() const {
  std::size_t n = 0;
  for (const auto& s : scales) n += static_cast<std::size_t>(std::count(s.obj.begin(), s.obj.end(), 1.0));
  return n;
}

std::vector<int> AssignedTargets::flat_cls() const {
  std::vector<int> out;
  for (const auto& s : scales) out.insert(out.end(), s.cls.begin(), s.cls.end());
  return out;
}

std::vector<double> AssignedTargets::flat_obj() const {
  std::vector<double> out;
  for (const auto& s : scales) out.insert(out.end(), s.obj.begin(), s.obj.end());
  return out;
}

std::vector<std::array<double, 4>> AssignedTargets::flat_edges() const {
  std::vector<std::array<double, 4>> out;
  for (const auto& s : scales) out.insert(out.end(), s.edges.begin(), s.edges.end());
  return out;
}

RegionGrid compute_region_weights(std::span<const geom::BoundingBox> gt_boxes, std::size_t grid_h,
                                  std::size_t grid_w, double stride, std::size_t elr_radius, double elr_decay) {
  if (!(stride > 0.0)) throw std::invalid_argument("stride must be positive");
  RegionGrid g{grid_h, grid_w, std::vector<double>(grid_h * grid_w, 0.0)};
  std::vector<char> key(grid_h * grid_w, 0);
  for (std::size_t i = 0; i < grid_h; ++i) {
    for (std::size_t j = 0; j < grid_w; ++j) {
      const double cx = (static_cast<double>(j) + 0.5) * stride;
      const double cy = (static_cast<double>(i) + 0.5) * stride;
      key[i * grid_w + j] = std::any_of(gt_boxes.begin(), gt_boxes.end(),
                                        [&](const geom::BoundingBox& b) { return b.contains(cx, cy); });
    }
  }
  const auto r = static_cast<std::ptrdiff_t>(elr_radius);
  const auto h = static_cast<std::ptrdiff_t>(grid_h);
  const auto w = static_cast<std::ptrdiff_t>(grid_w);
  for (std::ptrdiff_t i = 0; i < h; ++i) {
    for (std::ptrdiff_t j = 0; j < w; ++j) {
      if (key[i * w + j]) {
        g.values[i * w + j] = 1.0;
        continue;
      }
      bool near = false;
      for (std::ptrdiff_t di = -r; di <= r && !near; ++di) {
        for (std::ptrdiff_t dj = -r; dj <= r && !near; ++dj) {
          const std::ptrdiff_t ii = i + di, jj = j + dj;
          near = ii >= 0 && jj >= 0 && ii < h && jj < w && key[ii * w + jj];
        }
      }
      if (near) g.values[i * w + j] = elr_decay;
    }
  }
  return g;
}

AssignedTargets assign_targets(std::span<const LabeledBox> gt, std::span<const ScaleSpec> scales) {
  if (scales.empty()) throw std::invalid_argument("at least one scale is required");
  if (scales.front().size_lo != 0.0 || !std::isinf(scales.back().size_hi)) {
    throw std::invalid_argument("scale size ranges must start at 0 and end at infinity");
  }
  for (std::size_t s = 1; s < scales.size(); ++s) {
    if (scales[s].size_lo != scales[s - 1].size_hi || !(scales[s].size_lo < scales[s].size_hi)) {
      throw std::invalid_argument("scale size ranges must be contiguous and increasing");
    }
  }

  AssignedTargets out;
  for (const ScaleSpec& sc : scales) {
    const std::size_t cells = sc.h * sc.w;
    out.scales.push_back({sc.h, sc.w, sc.stride, std::vector<int>(cells, -1), std::vector<double>(cells, 0.0),
                          std::vector<std::array<double, 4>>(cells, {0.0, 0.0, 0.0, 0.0})});
  }

  // Area of the GT that currently owns each cell, for the smallest-area rule.
  std::vector<std::vector<double>> owner_area(scales.size());
  for (std::size_t s = 0; s < scales.size(); ++s) {
    owner_area[s].assign(scales[s].h * scales[s].w, std::numeric_limits<double>::infinity());
  }

  for (const LabeledBox& g : gt) {
    if (!(g.box.area() > 0.0)) {
      ++out.skipped_degenerate;
      continue;
    }
    const double size = std::max(g.box.width(), g.box.height());
    std::size_t s = 0;
    while (s + 1 < scales.size() && size > scales[s].size_hi) ++s;
    const ScaleSpec& sc = scales[s];
    ScaleTargets& t = out.scales[s];
    for (std::size_t i = 0; i < sc.h; ++i) {
      for (std::size_t j = 0; j < sc.w; ++j) {
        const geom::Point c{(static_cast<double>(j) + 0.5) * sc.stride, (static_cast<double>(i) + 0.5) * sc.stride};
        if (!g.box.contains(c.x, c.y)) continue;
        const std::size_t cell = i * sc.w + j;
        if (!(g.box.area() < owner_area[s][cell])) continue;
        owner_area[s][cell] = g.box.area();
        const geom::EdgeOffsets off = geom::to_offsets(g.box, c);
        t.cls[cell] = static_cast<int>(g.class_index);
        t.obj[cell] = 1.0;
        t.edges[cell] = {off.t / sc.stride, off.b / sc.stride, off.l / sc.stride, off.r / sc.stride};
      }
    }
  }
  return out;
}

namespace {

double weight_total(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  return total;
}

// A zero that still carries a (zero) gradient back to x.
Tensor zero_from(const Tensor& x) { return num::scale(num::sum(x), 0.0); }

void check_rows(const Tensor& logits, std::size_t cells, const char* what) {
  if (logits.rank() < 2 || logits.dim(0) != cells) {
    throw num::ShapeError(std::string(what) + ": logits " + num::to_string(logits.shape()) + " do not have " +
                          std::to_string(cells) + " cells");
  }
}

}  // namespace

Tensor cls_distill_loss(const Tensor& student_logits, const std::optional<Tensor>& teacher_logits,
                        std::span<const int> y_cls, std::span<const double> weights, double gamma,
                        double temperature) {
  if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("gamma must lie in [0, 1]");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (student_logits.rank() != 2) {
    throw num::ShapeError("cls_distill_loss: expected [cells, C], got " + num::to_string(student_logits.shape()));
  }
  const std::size_t cells = student_logits.dim(0);
  const std::size_t classes = student_logits.dim(1);
  if (y_cls.size() != cells || weights.size() != cells) {
    throw num::ShapeError("cls_distill_loss: targets/weights do not match " + num::to_string(student_logits.shape()));
  }
  if (teacher_logits && teacher_logits->shape() != student_logits.shape()) {
    throw num::ShapeError("cls_distill_loss: student " + num::to_string(student_logits.shape()) + " vs teacher " +
                          num::to_string(teacher_logits->shape()));
  }
  if (!teacher_logits && gamma != 0.0) throw std::invalid_argument("cls_distill_loss: gamma > 0 needs a teacher");

  const double total_w = weight_total(weights);
  if (total_w == 0.0) return zero_from(student_logits);

  std::vector<double> hard(cells * classes, 0.0);
  for (std::size_t i = 0; i < cells; ++i) {
    if (y_cls[i] < 0) continue;
    if (static_cast<std::size_t>(y_cls[i]) >= classes) throw std::out_of_range("class index out of range");
    hard[i * classes + static_cast<std::size_t>(y_cls[i])] = weights[i];
  }
  const Tensor supervised =
      num::scale(num::sum(num::mul(Tensor(student_logits.shape(), std::move(hard)), num::log_softmax_t(student_logits, 1.0))),
                 -1.0);
  Tensor combined = num::scale(supervised, 1.0 - gamma);

  if (teacher_logits) {
    Tensor soft;
    {
      num::NoGradGuard no_tape;
      soft = num::softmax_t(teacher_logits->detach(), temperature);
    }
    std::vector<double> weighted(soft.data().begin(), soft.data().end());
    for (std::size_t i = 0; i < cells; ++i) {
      for (std::size_t c = 0; c < classes; ++c) weighted[i * classes + c] *= weights[i];
    }
    const Tensor distill = num::scale(
        num::sum(num::mul(Tensor(student_logits.shape(), std::move(weighted)),
                          num::log_softmax_t(student_logits, temperature))),
        -1.0);
    combined = num::add(num::scale(distill, gamma * temperature * temperature), combined);
  }
  return num::scale(combined, 1.0 / total_w);
}

Tensor obj_distill_loss(const Tensor& student_conf, std::span<const double> y_obj,
                        const std::optional<Tensor>& teacher_conf, double epsilon) {
  if (epsilon < 0.0) throw std::invalid_argument("epsilon must be nonnegative");
  if (y_obj.size() != student_conf.size()) {
    throw num::ShapeError("obj_distill_loss: " + std::to_string(y_obj.size()) + " targets for confidences " +
                          num::to_string(student_conf.shape()));
  }
  const Tensor supervised = num::mse_mean(student_conf, Tensor(student_conf.shape(), {y_obj.begin(), y_obj.end()}));
  if (!teacher_conf) {
    if (epsilon != 0.0) throw std::invalid_argument("obj_distill_loss: epsilon > 0 needs a teacher");
    return supervised;
  }
  if (teacher_conf->shape() != student_conf.shape()) {
    throw num::ShapeError("obj_distill_loss: student " + num::to_string(student_conf.shape()) + " vs teacher " +
                          num::to_string(teacher_conf->shape()));
  }
  return num::add(supervised, num::scale(num::mse_mean(student_conf, teacher_conf->detach()), epsilon));
}

Tensor loc_distill_loss(const Tensor& student_edge_logits, const Tensor& teacher_edge_logits,
                        std::span<const double> weights, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  check_rows(student_edge_logits, weights.size(), "loc_distill_loss");
  if (student_edge_logits.shape() != teacher_edge_logits.shape()) {
    throw num::ShapeError("loc_distill_loss: student " + num::to_string(student_edge_logits.shape()) +
                          " vs teacher " + num::to_string(teacher_edge_logits.shape()));
  }
  const double total_w = weight_total(weights);
  if (total_w == 0.0) return zero_from(student_edge_logits);

  const std::size_t cells = weights.size();
  const std::size_t per_cell = student_edge_logits.size() / cells;
  const std::size_t edges = per_cell / student_edge_logits.shape().back();

  Tensor teacher_log;
  {
    num::NoGradGuard no_tape;
    teacher_log = num::log_softmax_t(teacher_edge_logits.detach(), temperature);
  }
  std::vector<double> weighted(teacher_log.size());
  for (std::size_t i = 0; i < weighted.size(); ++i) weighted[i] = std::exp(teacher_log.data()[i]) * weights[i / per_cell];
  const Tensor coeff(student_edge_logits.shape(), std::move(weighted));

  // KL = sum p_t log p_t - sum p_t log p_s; both sums use the same reduction
  // so identical logits give exactly zero.
  Tensor self_term;
  {
    num::NoGradGuard no_tape;
    self_term = num::sum(num::mul(coeff, teacher_log));
  }
  const Tensor cross_term = num::sum(num::mul(coeff, num::log_softmax_t(student_edge_logits, temperature)));
  const Tensor kl = num::sub(self_term, cross_term);
  return num::scale(kl, temperature * temperature / (static_cast<double>(edges) * total_w));
}

Tensor loc_supervised_loss(const Tensor& student_edge_logits, std::span<const std::array<double, 4>> edge_targets,
                           std::span<const int> y_cls, const boxdist::BinLattice& lattice) {
  check_rows(student_edge_logits, y_cls.size(), "loc_supervised_loss");
  const std::size_t cells = y_cls.size();
  const std::size_t bins = lattice.size();
  if (student_edge_logits.rank() != 3 || student_edge_logits.dim(1) != 4 || student_edge_logits.dim(2) != bins) {
    throw num::ShapeError("loc_supervised_loss: expected [" + std::to_string(cells) + ",4," + std::to_string(bins) +
                          "], got " + num::to_string(student_edge_logits.shape()));
  }
  if (edge_targets.size() != cells) throw num::ShapeError("loc_supervised_loss: edge target count mismatch");

  std::size_t positives = 0;
  std::vector<double> target_probs(cells * 4 * bins, 0.0);
  std::vector<double> target_values(cells * 4, 0.0);
  std::vector<double> mask(cells * 4, 0.0);
  for (std::size_t i = 0; i < cells; ++i) {
    if (y_cls[i] < 0) continue;
    ++positives;
    for (std::size_t e = 0; e < 4; ++e) {
      const boxdist::EncodedTarget enc = boxdist::encode_target(edge_targets[i][e], lattice);
      std::copy(enc.dist.probs.begin(), enc.dist.probs.end(), target_probs.begin() + (i * 4 + e) * bins);
      target_values[i * 4 + e] = std::clamp(edge_targets[i][e], lattice.e_min(), lattice.e_max());
      mask[i * 4 + e] = 1.0;
    }
  }
  if (positives == 0) return zero_from(student_edge_logits);

  const Tensor ce = num::scale(
      num::sum(num::mul(Tensor(student_edge_logits.shape(), std::move(target_probs)),
                        num::log_softmax_t(student_edge_logits, 1.0))),
      -1.0);

  std::vector<double> lattice_values(cells * 4 * bins);
  for (std::size_t k = 0; k < lattice_values.size(); ++k) lattice_values[k] = lattice.value(k % bins);
  const Tensor decoded = num::sum_last(
      num::mul(num::softmax_t(student_edge_logits, 1.0), Tensor(student_edge_logits.shape(), std::move(lattice_values))));
  const Tensor l1 = num::sum(num::mul(Tensor({cells, 4}, std::move(mask)),
                                      num::abs(num::sub(decoded, Tensor({cells, 4}, std::move(target_values))))));

  return num::scale(num::add(ce, l1), 1.0 / (4.0 * static_cast<double>(positives)));
}

Tensor total_loss(const LossParts& parts, const DistillConfig& config) {
  Tensor total = num::add(parts.obj, num::scale(parts.cls, config.lambda_cls));
  total = num::add(total, num::scale(parts.loc_sup, config.lambda_loc_sup));
  if (parts.loc_kd) total = num::add(total, num::scale(*parts.loc_kd, config.lambda_loc_kd));
  return total;
}

}  // namespace kdlab::loss
