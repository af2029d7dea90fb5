#include "kdlab/trainkit.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>

#include "kdlab/binio.hpp"
#include "kdlab/ops.hpp"
#include "kdlab/rng.hpp"

namespace kdlab::train {

using num::Tensor;

void ScheduleConfig::validate() const {
  if (total_epochs == 0) throw std::invalid_argument("total_epochs must be positive");
  if (warmup_epochs >= total_epochs) throw std::invalid_argument("warmup_epochs must be below total_epochs");
  if (steps_per_epoch == 0) throw std::invalid_argument("steps_per_epoch must be positive");
  if (!(lr_start > 0.0 && lr_peak > 0.0 && lr_final > 0.0)) throw std::invalid_argument("learning rates must be positive");
  if (lr_final > lr_peak) throw std::invalid_argument("lr_final must not exceed lr_peak");
}

double lr_at(std::size_t global_step, const ScheduleConfig& sched) {
  const std::size_t total = sched.total_epochs * sched.steps_per_epoch;
  if (global_step >= total) {
    throw std::out_of_range("step " + std::to_string(global_step) + " outside schedule of " + std::to_string(total) +
                            " steps");
  }
  const std::size_t warmup = sched.warmup_epochs * sched.steps_per_epoch;
  if (global_step < warmup) {
    const double frac = static_cast<double>(global_step) / static_cast<double>(warmup);
    return sched.lr_start + (sched.lr_peak - sched.lr_start) * frac;
  }
  const std::size_t span = total - 1 - warmup;
  const double progress = span == 0 ? 0.0 : static_cast<double>(global_step - warmup) / static_cast<double>(span);
  return sched.lr_final + 0.5 * (sched.lr_peak - sched.lr_final) * (1.0 + std::cos(std::numbers::pi * progress));
}

void sgd_step(std::span<double> params, std::span<const double> grads, double lr, double momentum,
              std::span<double> velocity) {
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    throw std::invalid_argument("sgd_step: parameter, gradient and velocity sizes differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grads[i];
    params[i] -= lr * velocity[i];
  }
}

void SgdMomentum::step(std::vector<det::NamedTensor>& params, double lr) {
  if (velocity_.empty()) {
    for (const auto& p : params) velocity_.emplace_back(p.value.size(), 0.0);
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k].value;
    if (!p.has_grad()) continue;
    sgd_step(p.data_mut(), p.grad(), lr, momentum_, velocity_[k]);
  }
}

eval::EvalReport evaluate_detector(const det::Detector& model, const std::vector<data::Scene>& scenes,
                                   double conf_threshold, double nms_iou) {
  std::vector<std::vector<geom::Detection>> preds;
  std::vector<std::vector<loss::LabeledBox>> gts;
  preds.reserve(scenes.size());
  for (const data::Scene& s : scenes) {
    preds.push_back(det::predict(model, s.image, conf_threshold, nms_iou));
    gts.push_back(s.annotations);
  }
  return eval::evaluate(preds, gts, model.config().classes);
}

namespace {

struct SampleTargets {
  std::vector<int> cls;
  std::vector<double> obj;
  std::vector<std::array<double, 4>> edges;
  std::vector<double> weights;
};

struct TeacherView {
  Tensor cls;    // [cells, C]
  Tensor conf;   // [cells], post-sigmoid
  Tensor edges;  // [cells, 4, n]
};

SampleTargets prepare_targets(const data::Scene& scene, const det::DetectorConfig& model,
                              const loss::DistillConfig& lc) {
  const std::size_t h = scene.image.dim(1), w = scene.image.dim(2);
  const auto specs = model.scale_specs(h, w);
  const loss::AssignedTargets assigned = loss::assign_targets(scene.annotations, specs);
  std::vector<geom::BoundingBox> boxes;
  for (const auto& a : scene.annotations) boxes.push_back(a.box);
  loss::GridRegionWeights weights;
  for (const auto& sp : specs) {
    weights.scales.push_back(loss::compute_region_weights(boxes, sp.h, sp.w, sp.stride, lc.elr_radius, lc.elr_decay));
  }
  return {assigned.flat_cls(), assigned.flat_obj(), assigned.flat_edges(), weights.flatten()};
}

struct SampleLoss {
  Tensor total;
  double obj = 0.0, cls = 0.0, loc_sup = 0.0, loc_kd = 0.0;
};

SampleLoss sample_loss(const det::Detector& model, const data::Scene& scene, const SampleTargets& t,
                       const TeacherView* teacher, const loss::DistillConfig& lc, const boxdist::BinLattice& lattice) {
  const det::FlatHeads heads = det::flatten(model.forward(scene.image));
  const Tensor conf = num::sigmoid(heads.obj_logits);
  std::optional<Tensor> t_cls, t_conf;
  if (teacher) {
    t_cls = teacher->cls;
    t_conf = teacher->conf;
  }
  loss::LossParts parts{
      loss::obj_distill_loss(conf, t.obj, t_conf, lc.epsilon),
      loss::cls_distill_loss(heads.cls_logits, t_cls, t.cls, t.weights, lc.gamma, lc.temperature),
      loss::loc_supervised_loss(heads.edge_logits, t.edges, t.cls, lattice),
      std::nullopt,
  };
  if (teacher && lc.lambda_loc_kd != 0.0) {
    parts.loc_kd = loss::loc_distill_loss(heads.edge_logits, teacher->edges, t.weights, lc.temperature);
  }
  SampleLoss out{loss::total_loss(parts, lc)};
  out.obj = parts.obj.item();
  out.cls = parts.cls.item();
  out.loc_sup = parts.loc_sup.item();
  out.loc_kd = parts.loc_kd ? parts.loc_kd->item() : 0.0;
  return out;
}

TrainResult run_training(const det::DetectorConfig& model_config, const data::Dataset& ds, const TrainConfig& tc,
                         const loss::DistillConfig& lc, const det::Detector* teacher, std::uint64_t seed,
                         const Evaluator& evaluator) {
  if (ds.train.empty()) throw std::invalid_argument("training split is empty");
  if (tc.batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  lc.validate();

  det::Detector model = det::Detector::build(model_config, derive_seed(seed, 1));
  model.set_trainable(true);
  const boxdist::BinLattice lattice = model_config.lattice();

  std::vector<SampleTargets> targets;
  targets.reserve(ds.train.size());
  for (const auto& s : ds.train) targets.push_back(prepare_targets(s, model_config, lc));

  // The teacher is frozen and inputs are not augmented, so its head outputs
  // can be computed once per training image.
  std::vector<TeacherView> teacher_views;
  if (teacher) {
    num::NoGradGuard no_tape;
    for (const auto& s : ds.train) {
      const det::FlatHeads h = det::flatten(teacher->forward(s.image));
      teacher_views.push_back({h.cls_logits, num::sigmoid(h.obj_logits), h.edge_logits});
    }
  }

  ScheduleConfig sched = tc.schedule;
  sched.steps_per_epoch = (ds.train.size() + tc.batch_size - 1) / tc.batch_size;
  sched.validate();

  const Evaluator eval_fn = evaluator ? evaluator : [&](const det::Detector& m, const std::vector<data::Scene>& sc) {
    return evaluate_detector(m, sc, tc.conf_threshold, tc.nms_iou);
  };

  SgdMomentum optimizer(tc.momentum);
  TrainResult result{model.clone(), {}};
  double stall_ref = 0.0;
  std::size_t stall = 0;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < sched.total_epochs; ++epoch) {
    std::vector<std::size_t> order(ds.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng(derive_seed(seed, 1000 + epoch)).shuffle(order);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr_at(step, sched);
    for (std::size_t begin = 0; begin < order.size(); begin += tc.batch_size, ++step) {
      const std::size_t end = std::min(order.size(), begin + tc.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(end - begin);
      model.zero_grad();
      for (std::size_t k = begin; k < end; ++k) {
        const std::size_t idx = order[k];
        SampleLoss sl;
        try {
          sl = sample_loss(model, ds.train[idx], targets[idx], teacher ? &teacher_views[idx] : nullptr, lc, lattice);
          num::scale(sl.total, inv_batch).backward();
        } catch (const std::domain_error& e) {
          throw DivergenceError("non-finite value at epoch " + std::to_string(epoch) + ", step " +
                                std::to_string(step) + ": " + e.what());
        }
        rec.loss_total += sl.total.item();
        rec.loss_obj += sl.obj;
        rec.loss_cls += sl.cls;
        rec.loss_loc_sup += sl.loc_sup;
        rec.loss_loc_kd += sl.loc_kd;
      }
      optimizer.step(model.parameters(), lr_at(step, sched));
      for (const auto& p : model.parameters()) {
        for (double v : p.value.data()) {
          if (!std::isfinite(v)) {
            throw DivergenceError("parameter '" + p.name + "' became non-finite at epoch " + std::to_string(epoch) +
                                  ", step " + std::to_string(step));
          }
        }
      }
    }
    const auto n = static_cast<double>(order.size());
    rec.loss_total /= n;
    rec.loss_obj /= n;
    rec.loss_cls /= n;
    rec.loss_loc_sup /= n;
    rec.loss_loc_kd /= n;

    const eval::EvalReport rep = eval_fn(model, ds.val);
    rec.val_precision = rep.precision;
    rec.val_recall = rep.recall;
    rec.val_map50 = rep.map50;
    rec.val_map50_95 = rep.map50_95;
    result.history.epochs.push_back(rec);

    if (epoch == 0 || rec.val_map50 > result.best_map50) {
      result.best = model.clone();
      result.best_epoch = epoch;
      result.best_map50 = rec.val_map50;
    }
    if (epoch == 0 || rec.val_map50 > stall_ref + tc.early.min_delta) {
      stall_ref = rec.val_map50;
      stall = 0;
    } else if (++stall >= tc.early.patience && tc.early.enabled) {
      result.early_stopped = true;
      break;
    }
  }
  result.best.set_trainable(false);
  return result;
}

void check_heads(const det::DetectorConfig& teacher, const det::DetectorConfig& student) {
  if (teacher.classes != student.classes || teacher.bins != student.bins || teacher.scales != student.scales) {
    throw HeadMismatchError("teacher heads (classes " + std::to_string(teacher.classes) + ", bins " +
                            std::to_string(teacher.bins) + ", " + std::to_string(teacher.scales.size()) +
                            " scales) do not match student heads (classes " + std::to_string(student.classes) +
                            ", bins " + std::to_string(student.bins) + ", " + std::to_string(student.scales.size()) +
                            " scales)");
  }
}

}  // namespace

TrainResult train_supervised(const det::DetectorConfig& model_config, const data::Dataset& dataset,
                             const TrainConfig& config, const loss::DistillConfig& loss_config, std::uint64_t seed,
                             const Evaluator& evaluator) {
  loss::DistillConfig lc = loss_config;
  lc.gamma = 0.0;
  lc.epsilon = 0.0;
  lc.lambda_loc_kd = 0.0;
  return run_training(model_config, dataset, config, lc, nullptr, seed, evaluator);
}

TrainResult train_teacher(const data::Dataset& dataset, const det::DetectorConfig& teacher_config,
                          const TrainConfig& config, std::uint64_t seed, const Evaluator& evaluator) {
  TrainConfig full = config;
  full.early.enabled = false;
  return train_supervised(teacher_config, dataset, full, loss::DistillConfig::baseline(), seed, evaluator);
}

TrainResult distill_student(const det::Detector& teacher, const det::DetectorConfig& student_config,
                            const loss::DistillConfig& distill_config, const data::Dataset& dataset,
                            const TrainConfig& config, std::uint64_t seed, const Evaluator& evaluator) {
  check_heads(teacher.config(), student_config);
  return run_training(student_config, dataset, config, distill_config, &teacher, seed, evaluator);
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

double parse_double(const std::string& key, const std::string& value) {
  double v = 0.0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size() || !std::isfinite(v)) {
    throw std::invalid_argument("invalid number '" + value + "' for key '" + key + "'");
  }
  return v;
}

std::size_t parse_count(const std::string& key, const std::string& value) {
  std::size_t v = 0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
    throw std::invalid_argument("invalid integer '" + value + "' for key '" + key + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw std::invalid_argument("invalid boolean '" + value + "' for key '" + key + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& [k, v] : RunConfig{}.effective()) out.push_back(k);
  return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto& s = train.schedule;
  if (key == "epochs") s.total_epochs = parse_count(key, value);
  else if (key == "warmup_epochs") s.warmup_epochs = parse_count(key, value);
  else if (key == "lr_start") s.lr_start = parse_double(key, value);
  else if (key == "lr_peak") s.lr_peak = parse_double(key, value);
  else if (key == "lr_final") s.lr_final = parse_double(key, value);
  else if (key == "batch_size") train.batch_size = parse_count(key, value);
  else if (key == "momentum") train.momentum = parse_double(key, value);
  else if (key == "early_stopping") train.early.enabled = parse_bool(key, value);
  else if (key == "patience") train.early.patience = parse_count(key, value);
  else if (key == "min_delta") train.early.min_delta = parse_double(key, value);
  else if (key == "conf_threshold") train.conf_threshold = parse_double(key, value);
  else if (key == "nms_iou") train.nms_iou = parse_double(key, value);
  else if (key == "temperature") distill.temperature = parse_double(key, value);
  else if (key == "gamma") distill.gamma = parse_double(key, value);
  else if (key == "epsilon") distill.epsilon = parse_double(key, value);
  else if (key == "lambda_cls") distill.lambda_cls = parse_double(key, value);
  else if (key == "lambda_loc_sup") distill.lambda_loc_sup = parse_double(key, value);
  else if (key == "lambda_loc_kd") distill.lambda_loc_kd = parse_double(key, value);
  else if (key == "elr_radius") distill.elr_radius = parse_count(key, value);
  else if (key == "elr_decay") distill.elr_decay = parse_double(key, value);
  else if (key == "teacher_width") teacher.width = parse_count(key, value);
  else if (key == "teacher_depth") teacher.depth = parse_count(key, value);
  else if (key == "student_width") student.width = parse_count(key, value);
  else if (key == "student_depth") student.depth = parse_count(key, value);
  else if (key == "bins") teacher.bins = student.bins = parse_count(key, value);
  else throw std::invalid_argument("unknown configuration key '" + key + "'");
}

std::map<std::string, std::string> RunConfig::effective() const {
  const auto& s = train.schedule;
  return {
      {"epochs", std::to_string(s.total_epochs)},
      {"warmup_epochs", std::to_string(s.warmup_epochs)},
      {"lr_start", fmt_double(s.lr_start)},
      {"lr_peak", fmt_double(s.lr_peak)},
      {"lr_final", fmt_double(s.lr_final)},
      {"batch_size", std::to_string(train.batch_size)},
      {"momentum", fmt_double(train.momentum)},
      {"early_stopping", train.early.enabled ? "true" : "false"},
      {"patience", std::to_string(train.early.patience)},
      {"min_delta", fmt_double(train.early.min_delta)},
      {"conf_threshold", fmt_double(train.conf_threshold)},
      {"nms_iou", fmt_double(train.nms_iou)},
      {"temperature", fmt_double(distill.temperature)},
      {"gamma", fmt_double(distill.gamma)},
      {"epsilon", fmt_double(distill.epsilon)},
      {"lambda_cls", fmt_double(distill.lambda_cls)},
      {"lambda_loc_sup", fmt_double(distill.lambda_loc_sup)},
      {"lambda_loc_kd", fmt_double(distill.lambda_loc_kd)},
      {"elr_radius", std::to_string(distill.elr_radius)},
      {"elr_decay", fmt_double(distill.elr_decay)},
      {"teacher_width", std::to_string(teacher.width)},
      {"teacher_depth", std::to_string(teacher.depth)},
      {"student_width", std::to_string(student.width)},
      {"student_depth", std::to_string(student.depth)},
      {"bins", std::to_string(student.bins)},
  };
}

RunConfig parse_run_config(const std::string& text, const std::string& source) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      cfg.set(trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return parse_run_config({bytes.begin(), bytes.end()}, path.string());
}

std::string format_run_meta(const RunConfig& config, std::uint64_t seed, const std::string& command) {
  std::ostringstream os;
  os << "code_version = " << kCodeVersion << "\n";
  os << "command = " << command << "\n";
  os << "seed = " << seed << "\n";
  for (const auto& [k, v] : config.effective()) os << k << " = " << v << "\n";
  return os.str();
}

}  // namespace kdlab::train
