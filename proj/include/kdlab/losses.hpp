#pragma once

#include <array>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "kdlab/boxdist.hpp"
#include "kdlab/geometry.hpp"
#include "kdlab/tensor.hpp"

namespace kdlab::loss {

// Distillation weight of every cell of one feature map: 1 on key distillation
// region (KDR) cells, elr_decay on the expandable ring around them, 0
// elsewhere.
struct RegionGrid {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<double> values;  // row-major [h, w]

  double at(std::size_t i, std::size_t j) const { return values[i * w + j]; }
};

struct GridRegionWeights {
  std::vector<RegionGrid> scales;

  // Concatenation of all scales in order, matching the flattened head layout.
  std::vector<double> flatten() const;
};

struct DistillConfig {
  double temperature = 25.0;
  double gamma = 0.5;
  double epsilon = 1.0;
  double lambda_cls = 1.0;
  double lambda_loc_sup = 1.0;
  double lambda_loc_kd = 0.25;
  std::size_t elr_radius = 1;
  double elr_decay = 0.5;

  // Throws std::invalid_argument on an out-of-range field.
  void validate() const;

  // Supervised-only configuration: no teacher terms.
  static DistillConfig baseline();
};

struct LabeledBox {
  geom::BoundingBox box;
  std::size_t class_index = 0;
};

// One detection scale. A ground truth box goes to the scale whose
// (size_lo, size_hi] contains max(width, height).
struct ScaleSpec {
  std::size_t h = 0;
  std::size_t w = 0;
  double stride = 0.0;
  double size_lo = 0.0;
  double size_hi = std::numeric_limits<double>::infinity();
};

struct ScaleTargets {
  std::size_t h = 0;
  std::size_t w = 0;
  double stride = 0.0;
  std::vector<int> cls;                       // class per cell, -1 on negatives
  std::vector<double> obj;                    // 1 on positives, 0 elsewhere
  std::vector<std::array<double, 4>> edges;   // (t, b, l, r) in stride units, positives only
};

struct AssignedTargets {
  std::vector<ScaleTargets> scales;
  std::size_t skipped_degenerate = 0;

  std::size_t positives() const;
  // Per-cell views concatenated across scales.
  std::vector<int> flat_cls() const;
  std::vector<double> flat_obj() const;
  std::vector<std::array<double, 4>> flat_edges() const;
};

RegionGrid compute_region_weights(std::span<const geom::BoundingBox> gt_boxes, std::size_t grid_h,
                                  std::size_t grid_w, double stride, std::size_t elr_radius, double elr_decay);

// Throws std::invalid_argument when the size ranges do not partition (0, inf).
AssignedTargets assign_targets(std::span<const LabeledBox> gt, std::span<const ScaleSpec> scales);

// student/teacher logits [cells, C]; y_cls per cell (-1 = negative).
// Teacher is detached; with no teacher, gamma must be 0.
num::Tensor cls_distill_loss(const num::Tensor& student_logits, const std::optional<num::Tensor>& teacher_logits,
                             std::span<const int> y_cls, std::span<const double> weights, double gamma,
                             double temperature);

// Os, Ot: post-sigmoid confidences [cells].
num::Tensor obj_distill_loss(const num::Tensor& student_conf, std::span<const double> y_obj,
                             const std::optional<num::Tensor>& teacher_conf, double epsilon);

// Edge logits [cells, 4, n]. T^2-scaled KL(teacher || student) per edge,
// averaged over (cell, edge) with the cell weights.
num::Tensor loc_distill_loss(const num::Tensor& student_edge_logits, const num::Tensor& teacher_edge_logits,
                             std::span<const double> weights, double temperature);

// Cross entropy against the two-bin target distribution plus the L1 error
// of the decoded expectation, averaged over positive cells and edges.
num::Tensor loc_supervised_loss(const num::Tensor& student_edge_logits,
                                std::span<const std::array<double, 4>> edge_targets, std::span<const int> y_cls,
                                const boxdist::BinLattice& lattice);

struct LossParts {
  num::Tensor obj;
  num::Tensor cls;
  num::Tensor loc_sup;
  std::optional<num::Tensor> loc_kd;
};

num::Tensor total_loss(const LossParts& parts, const DistillConfig& config);

}  // namespace kdlab::loss
