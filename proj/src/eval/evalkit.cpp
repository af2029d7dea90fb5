#include "kdlab/evalkit.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace kdlab::eval {

std::array<double, kNumIouThresholds> iou_thresholds() {
  std::array<double, kNumIouThresholds> t{};
  for (std::size_t i = 0; i < kNumIouThresholds; ++i) t[i] = static_cast<double>(50 + 5 * i) / 100.0;
  return t;
}

namespace {

std::vector<std::size_t> score_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

MatchResult match_detections(std::span<const geom::Detection> dets, std::span<const loss::LabeledBox> gts,
                             double iou_thr) {
  std::vector<double> scores(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) scores[i] = dets[i].score;

  MatchResult r;
  r.tp.assign(dets.size(), false);
  r.gt_for.assign(dets.size(), -1);
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t d : score_order(scores)) {
    double best_iou = iou_thr;
    std::ptrdiff_t best = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g] || gts[g].class_index != dets[d].class_index) continue;
      const double v = geom::iou(dets[d].box, gts[g].box);
      if (v >= best_iou && (best < 0 || v > best_iou)) {
        best_iou = v;
        best = static_cast<std::ptrdiff_t>(g);
      }
    }
    if (best >= 0) {
      taken[static_cast<std::size_t>(best)] = true;
      r.tp[d] = true;
      r.gt_for[d] = best;
    }
  }
  r.fn = static_cast<std::size_t>(std::count(taken.begin(), taken.end(), false));
  return r;
}

std::optional<double> average_precision(std::span<const double> scores, const std::vector<bool>& tp,
                                        std::size_t n_gt) {
  if (scores.size() != tp.size()) throw std::invalid_argument("average_precision: scores/flags length mismatch");
  if (n_gt == 0) {
    if (scores.empty()) return std::nullopt;
    return 0.0;
  }
  const auto order = score_order(scores);
  std::vector<double> precision(order.size());
  std::vector<double> recall(order.size());
  std::size_t tp_count = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (tp[order[k]]) ++tp_count;
    precision[k] = static_cast<double>(tp_count) / static_cast<double>(k + 1);
    recall[k] = static_cast<double>(tp_count) / static_cast<double>(n_gt);
  }
  // Envelope: precision at k becomes the best precision at any later point.
  for (std::size_t k = order.size(); k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);

  double total = 0.0;
  std::size_t k = 0;
  for (int i = 0; i <= 100; ++i) {
    const double r = static_cast<double>(i) / 100.0;
    while (k < recall.size() && recall[k] < r) ++k;
    if (k < recall.size()) total += precision[k];
  }
  return total / 101.0;
}

EvalReport evaluate(const std::vector<std::vector<geom::Detection>>& predictions,
                    const std::vector<std::vector<loss::LabeledBox>>& ground_truth, std::size_t classes) {
  if (predictions.size() != ground_truth.size()) {
    throw std::invalid_argument("evaluate: " + std::to_string(predictions.size()) + " prediction sets for " +
                                std::to_string(ground_truth.size()) + " images");
  }
  const auto thresholds = iou_thresholds();
  EvalReport rep;
  rep.classes = classes;
  rep.images = predictions.size();
  rep.ap.resize(classes);

  std::vector<std::size_t> n_gt(classes, 0);
  for (const auto& gts : ground_truth) {
    for (const auto& g : gts) {
      if (g.class_index >= classes) throw std::out_of_range("ground truth class index out of range");
      ++n_gt[g.class_index];
    }
  }

  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    std::vector<std::vector<double>> scores(classes);
    std::vector<std::vector<bool>> flags(classes);
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t img = 0; img < predictions.size(); ++img) {
      const auto& dets = predictions[img];
      const MatchResult m = match_detections(dets, ground_truth[img], thresholds[t]);
      for (std::size_t d = 0; d < dets.size(); ++d) {
        if (dets[d].class_index >= classes) throw std::out_of_range("detection class index out of range");
        scores[dets[d].class_index].push_back(dets[d].score);
        flags[dets[d].class_index].push_back(m.tp[d]);
        m.tp[d] ? ++tp : ++fp;
      }
      fn += m.fn;
    }
    for (std::size_t c = 0; c < classes; ++c) rep.ap[c][t] = average_precision(scores[c], flags[c], n_gt[c]);
    if (t == 0) {
      rep.tp = tp;
      rep.fp = fp;
      rep.fn = fn;
      rep.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
      rep.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    }
  }

  double sum50 = 0.0, sum_all = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    if (!rep.ap[c][0]) continue;
    ++counted;
    sum50 += *rep.ap[c][0];
    double per_class = 0.0;
    for (const auto& v : rep.ap[c]) per_class += v.value_or(0.0);
    sum_all += per_class / static_cast<double>(kNumIouThresholds);
  }
  if (counted > 0) {
    rep.map50 = sum50 / static_cast<double>(counted);
    rep.map50_95 = sum_all / static_cast<double>(counted);
  }
  return rep;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["images"] = report.images;
  j["classes"] = report.classes;
  j["map50"] = report.map50;
  j["map50_95"] = report.map50_95;
  j["precision"] = report.precision;
  j["recall"] = report.recall;
  j["tp"] = report.tp;
  j["fp"] = report.fp;
  j["fn"] = report.fn;
  const auto thresholds = iou_thresholds();
  nlohmann::ordered_json per_class = nlohmann::ordered_json::object();
  for (std::size_t c = 0; c < report.ap.size(); ++c) {
    if (!report.ap[c][0]) {
      per_class[std::to_string(c)] = nullptr;
      continue;
    }
    nlohmann::ordered_json row;
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      char key[8];
      std::snprintf(key, sizeof key, "%.2f", thresholds[t]);
      row[key] = report.ap[c][t].value_or(0.0);
    }
    per_class[std::to_string(c)] = row;
  }
  j["ap_per_class"] = per_class;
  return j.dump(2) + "\n";
}

void emit_curves(const TrainHistory& history, const std::filesystem::path& path) {
  if (history.epochs.empty()) throw std::invalid_argument("emit_curves: empty history");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write curves to " + path.string());
  out << kCurvesHeader << "\n";
  char line[512];
  for (const EpochRecord& e : history.epochs) {
    std::snprintf(line, sizeof line, "%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", e.epoch, e.lr,
                  e.loss_total, e.loss_obj, e.loss_cls, e.loss_loc_sup, e.loss_loc_kd, e.val_precision, e.val_recall,
                  e.val_map50, e.val_map50_95);
    out << line;
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

TrainHistory parse_curves(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != kCurvesHeader) throw std::invalid_argument("curves: missing header");
  TrainHistory h;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    EpochRecord e;
    char tail = 0;
    const int n = std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf%c", &e.epoch, &e.lr,
                              &e.loss_total, &e.loss_obj, &e.loss_cls, &e.loss_loc_sup, &e.loss_loc_kd,
                              &e.val_precision, &e.val_recall, &e.val_map50, &e.val_map50_95, &tail);
    if (n != 11) throw std::invalid_argument("curves: malformed row '" + line + "'");
    h.epochs.push_back(e);
  }
  return h;
}

}  // namespace kdlab::eval
