#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kdlab/geometry.hpp"
#include "kdlab/history.hpp"
#include "kdlab/losses.hpp"

namespace kdlab::eval {

inline constexpr std::size_t kNumIouThresholds = 10;

// 0.50, 0.55, ..., 0.95
std::array<double, kNumIouThresholds> iou_thresholds();

struct MatchResult {
  std::vector<bool> tp;                // per detection, input order
  std::vector<std::ptrdiff_t> gt_for;  // matched GT index or -1
  std::size_t fn = 0;
};

// Greedy one-to-one matching: detections by descending score (ties: lower
// index) take the highest-IoU unmatched GT of their class with
// IoU >= iou_thr (ties: lower GT index).
MatchResult match_detections(std::span<const geom::Detection> dets, std::span<const loss::LabeledBox> gts,
                             double iou_thr);

// 101-point interpolated AP. Returns nullopt when there are neither ground
// truths nor detections, so the class can be left out of the mean.
std::optional<double> average_precision(std::span<const double> scores, const std::vector<bool>& tp,
                                        std::size_t n_gt);

struct EvalReport {
  std::size_t classes = 0;
  // ap[c][t]; nullopt for classes without GT and detections.
  std::vector<std::array<std::optional<double>, kNumIouThresholds>> ap;
  double precision = 0.0;
  double recall = 0.0;
  double map50 = 0.0;
  double map50_95 = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t images = 0;
};

EvalReport evaluate(const std::vector<std::vector<geom::Detection>>& predictions,
                    const std::vector<std::vector<loss::LabeledBox>>& ground_truth, std::size_t classes);

// JSON text with keys: images, classes, map50, map50_95, precision, recall,
// tp, fp, fn, ap_per_class (class -> {"0.50": ap, ...} or null).
std::string report_to_json(const EvalReport& report);

inline constexpr const char* kCurvesHeader =
    "epoch,lr,loss_total,loss_obj,loss_cls,loss_loc_sup,loss_loc_kd,val_precision,val_recall,val_map50,val_map50_95";

// Throws std::runtime_error for an unwritable path and std::invalid_argument
// for an empty history.
void emit_curves(const TrainHistory& history, const std::filesystem::path& path);
TrainHistory parse_curves(const std::string& csv);

}  // namespace kdlab::eval
