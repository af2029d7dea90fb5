#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kdlab/detector.hpp"
#include "kdlab/evalkit.hpp"
#include "kdlab/history.hpp"
#include "kdlab/losses.hpp"
#include "kdlab/synthdata.hpp"

namespace kdlab::train {

inline constexpr const char* kCodeVersion = "kdlab 0.1.0";

struct ScheduleConfig {
  std::size_t warmup_epochs = 3;
  std::size_t total_epochs = 40;
  double lr_start = 0.002;
  double lr_peak = 0.02;
  double lr_final = 0.0002;
  std::size_t steps_per_epoch = 1;

  void validate() const;
};

// Linear warmup from lr_start to lr_peak, then cosine annealing from lr_peak
// to lr_final over the remaining steps. Throws std::out_of_range outside
// [0, total_epochs * steps_per_epoch).
double lr_at(std::size_t global_step, const ScheduleConfig& sched);

// v <- momentum * v + g;  p <- p - lr * v
void sgd_step(std::span<double> params, std::span<const double> grads, double lr, double momentum,
              std::span<double> velocity);

class SgdMomentum {
 public:
  explicit SgdMomentum(double momentum) : momentum_(momentum) {}
  void step(std::vector<det::NamedTensor>& params, double lr);

 private:
  double momentum_;
  std::vector<std::vector<double>> velocity_;
};

struct EarlyStopConfig {
  std::size_t patience = 8;
  double min_delta = 0.0;
  bool enabled = true;
};

struct TrainConfig {
  ScheduleConfig schedule;  // steps_per_epoch is derived from the data
  std::size_t batch_size = 8;
  double momentum = 0.9;
  EarlyStopConfig early;
  double conf_threshold = 0.01;
  double nms_iou = 0.5;
};

// Validation hook; the default runs predict + evaluate on the given scenes.
using Evaluator = std::function<eval::EvalReport(const det::Detector&, const std::vector<data::Scene>&)>;

eval::EvalReport evaluate_detector(const det::Detector& model, const std::vector<data::Scene>& scenes,
                                   double conf_threshold, double nms_iou);

struct TrainResult {
  det::Detector best;         // parameters from the best validation epoch
  TrainHistory history;
  std::size_t best_epoch = 0;
  double best_map50 = 0.0;
  bool early_stopped = false;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class HeadMismatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Supervised training of a freshly built model (obj with epsilon = 0, cls
// with gamma = 0, supervised localization).
TrainResult train_supervised(const det::DetectorConfig& model_config, const data::Dataset& dataset,
                             const TrainConfig& config, const loss::DistillConfig& loss_config, std::uint64_t seed,
                             const Evaluator& evaluator = {});

// Runs every scheduled epoch; early stopping applies to students only.
TrainResult train_teacher(const data::Dataset& dataset, const det::DetectorConfig& teacher_config,
                          const TrainConfig& config, std::uint64_t seed, const Evaluator& evaluator = {});

// Student trained against a frozen teacher. Throws HeadMismatchError before
// any training when the head shapes differ.
TrainResult distill_student(const det::Detector& teacher, const det::DetectorConfig& student_config,
                            const loss::DistillConfig& distill_config, const data::Dataset& dataset,
                            const TrainConfig& config, std::uint64_t seed, const Evaluator& evaluator = {});

// Flat `key = value` configuration. Unknown keys are rejected.
struct RunConfig {
  TrainConfig train;
  loss::DistillConfig distill;
  det::DetectorConfig teacher = det::DetectorConfig::teacher();
  det::DetectorConfig student = det::DetectorConfig::student();

  static std::vector<std::string> keys();
  void set(const std::string& key, const std::string& value);
  std::map<std::string, std::string> effective() const;
};

RunConfig parse_run_config(const std::string& text, const std::string& source);
RunConfig load_run_config(const std::filesystem::path& path);

// run.meta: every effective value, the seed and the code version.
std::string format_run_meta(const RunConfig& config, std::uint64_t seed, const std::string& command);

}  // namespace kdlab::train
