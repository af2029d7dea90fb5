#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "kdlab/trainkit.hpp"
#include "support.hpp"

using namespace kdlab::train;
using kdlab::det::Detector;
using kdlab::det::DetectorConfig;
using kdlab::loss::DistillConfig;

namespace {

const kdlab::data::Dataset& tiny_dataset() {
  static const kdlab::data::Dataset ds = kdlab::data::generate_dataset(10, 4, kdlab::data::SceneParams{});
  return ds;
}

TrainConfig short_config(std::size_t epochs) {
  TrainConfig c;
  c.schedule.total_epochs = epochs;
  c.schedule.warmup_epochs = 1;
  c.batch_size = 4;
  return c;
}

DistillConfig degenerate() {
  DistillConfig d;
  d.gamma = 0.0;
  d.epsilon = 0.0;
  d.lambda_loc_kd = 0.0;
  return d;
}

}  // namespace

TEST(Schedule, Endpoints) {
  ScheduleConfig s;
  s.total_epochs = 40;
  s.warmup_epochs = 3;
  s.steps_per_epoch = 60;
  EXPECT_NEAR(lr_at(0, s), s.lr_start, 1e-12);
  EXPECT_NEAR(lr_at(3 * 60, s), s.lr_peak, 1e-12);
  EXPECT_NEAR(lr_at(40 * 60 - 1, s), s.lr_final, 1e-12);
  EXPECT_THROW(lr_at(40 * 60, s), std::out_of_range);
}

TEST(Schedule, ContinuousAtWarmupBoundaryAndMonotone) {
  ScheduleConfig s;
  s.steps_per_epoch = 1000;
  const std::size_t w = s.warmup_epochs * s.steps_per_epoch;
  const double jump = lr_at(w, s) - lr_at(w - 1, s);
  const double slope = lr_at(w - 1, s) - lr_at(w - 2, s);
  EXPECT_NEAR(jump, slope, 1e-9);
  for (std::size_t k = 1; k < w; ++k) EXPECT_GT(lr_at(k, s), lr_at(k - 1, s));
  for (std::size_t k = w + 1; k < s.total_epochs * s.steps_per_epoch; ++k) EXPECT_LE(lr_at(k, s), lr_at(k - 1, s));
}

TEST(Schedule, Validation) {
  ScheduleConfig s;
  s.warmup_epochs = s.total_epochs;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = ScheduleConfig{};
  s.lr_final = 1.0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Sgd, HandComputedMomentum) {
  std::vector<double> p{1.0}, v{0.0};
  const std::vector<double> g{0.5};
  sgd_step(p, g, 0.1, 0.9, v);
  EXPECT_DOUBLE_EQ(v[0], 0.5);
  EXPECT_DOUBLE_EQ(p[0], 0.95);
  sgd_step(p, g, 0.1, 0.9, v);
  EXPECT_DOUBLE_EQ(v[0], 0.95);
  EXPECT_DOUBLE_EQ(p[0], 0.855);
}

TEST(Sgd, ZeroMomentumIsPlainDescentAndSizesChecked) {
  std::vector<double> p{1.0, -2.0}, v{0.0, 0.0};
  const std::vector<double> g{0.5, -1.0};
  sgd_step(p, g, 0.2, 0.0, v);
  EXPECT_DOUBLE_EQ(p[0], 0.9);
  EXPECT_DOUBLE_EQ(p[1], -1.8);
  std::vector<double> short_v{0.0};
  EXPECT_THROW(sgd_step(p, g, 0.1, 0.9, short_v), std::invalid_argument);
}

TEST(Training, OneEpochOnTinyDataset) {
  const TrainResult r = train_supervised(DetectorConfig::student(), tiny_dataset(), short_config(2),
                                         DistillConfig::baseline(), 1);
  ASSERT_EQ(r.history.epochs.size(), 2u);
  for (const auto& e : r.history.epochs) {
    EXPECT_TRUE(std::isfinite(e.loss_total));
    EXPECT_GE(e.loss_total, 0.0);
    EXPECT_EQ(e.loss_loc_kd, 0.0);
  }
  EXPECT_EQ(r.history.epochs[0].lr, TrainConfig{}.schedule.lr_start);
}

TEST(Training, BestCheckpointReproducesValidationScore) {
  const auto& ds = tiny_dataset();
  const TrainConfig cfg = short_config(3);
  const TrainResult r = train_supervised(DetectorConfig::student(), ds, cfg, DistillConfig::baseline(), 2);
  const auto dir = testsupport::scratch_dir("train_ckpt");
  kdlab::det::save_checkpoint(r.best, dir / "best.ckpt");
  const Detector back = kdlab::det::load_checkpoint(dir / "best.ckpt");
  EXPECT_EQ(evaluate_detector(back, ds.val, cfg.conf_threshold, cfg.nms_iou).map50, r.best_map50);
  EXPECT_EQ(r.history.epochs[r.best_epoch].val_map50, r.best_map50);
}

TEST(Training, BestEpochIsFirstArgmax) {
  const TrainResult r = train_supervised(DetectorConfig::student(), tiny_dataset(), short_config(4),
                                         DistillConfig::baseline(), 3);
  const auto& h = r.history.epochs;
  const auto it = std::max_element(h.begin(), h.end(),
                                    [](const auto& a, const auto& b) { return a.val_map50 < b.val_map50; });
  EXPECT_EQ(r.best_epoch, static_cast<std::size_t>(it - h.begin()));
}

TEST(Training, DeterministicForSameSeed) {
  const Detector teacher = Detector::build(DetectorConfig::teacher(), 5);
  const auto run = [&] {
    return distill_student(teacher, DetectorConfig::student(), DistillConfig{}, tiny_dataset(), short_config(2), 6);
  };
  const TrainResult a = run(), b = run();
  ASSERT_EQ(a.history.epochs.size(), b.history.epochs.size());
  for (std::size_t e = 0; e < a.history.epochs.size(); ++e) EXPECT_EQ(a.history.epochs[e], b.history.epochs[e]);
  EXPECT_EQ(kdlab::det::serialize(a.best), kdlab::det::serialize(b.best));
}

TEST(Training, DegenerateDistillationEqualsBaseline) {
  const Detector teacher = Detector::build(DetectorConfig::teacher(), 7);
  const TrainConfig cfg = short_config(3);
  const TrainResult base = train_supervised(DetectorConfig::student(), tiny_dataset(), cfg, DistillConfig::baseline(), 8);
  const TrainResult dist = distill_student(teacher, DetectorConfig::student(), degenerate(), tiny_dataset(), cfg, 8);
  ASSERT_EQ(base.history.epochs.size(), dist.history.epochs.size());
  for (std::size_t e = 0; e < base.history.epochs.size(); ++e)
    EXPECT_EQ(base.history.epochs[e], dist.history.epochs[e]) << "epoch " << e;
  EXPECT_EQ(kdlab::det::serialize(base.best), kdlab::det::serialize(dist.best));
}

TEST(Training, TeacherStaysFrozen) {
  Detector teacher = Detector::build(DetectorConfig::teacher(), 9);
  const auto before = kdlab::det::serialize(teacher);
  const TrainResult r = distill_student(teacher, DetectorConfig::student(), DistillConfig{}, tiny_dataset(),
                                        short_config(2), 10);
  EXPECT_EQ(kdlab::det::serialize(teacher), before);
  for (const auto& e : r.history.epochs) {
    EXPECT_TRUE(std::isfinite(e.loss_total));
    EXPECT_GE(e.loss_loc_kd, 0.0);
  }
}

TEST(Training, HeadMismatchRejectedBeforeTraining) {
  DetectorConfig other = DetectorConfig::teacher();
  other.classes = 4;
  const Detector teacher = Detector::build(other, 11);
  int calls = 0;
  const Evaluator counting = [&](const Detector&, const std::vector<kdlab::data::Scene>&) {
    ++calls;
    return kdlab::eval::EvalReport{};
  };
  EXPECT_THROW(distill_student(teacher, DetectorConfig::student(), DistillConfig{}, tiny_dataset(), short_config(2),
                               12, counting),
               HeadMismatchError);
  EXPECT_EQ(calls, 0);
}

TEST(EarlyStopping, ScriptedPlateau) {
  const std::size_t plateau = 3, patience = 4, total = 30;
  TrainConfig cfg = short_config(total);
  cfg.early.patience = patience;
  std::size_t epoch = 0;
  const Evaluator scripted = [&](const Detector&, const std::vector<kdlab::data::Scene>&) {
    kdlab::eval::EvalReport rep;
    rep.map50 = 0.1 * static_cast<double>(std::min(epoch, plateau));
    ++epoch;
    return rep;
  };
  const TrainResult r =
      train_supervised(DetectorConfig::student(), tiny_dataset(), cfg, DistillConfig::baseline(), 13, scripted);
  EXPECT_TRUE(r.early_stopped);
  EXPECT_GE(r.history.epochs.size(), plateau + patience);
  EXPECT_LE(r.history.epochs.size(), total);
  EXPECT_EQ(r.best_epoch, plateau);
}

TEST(EarlyStopping, DisabledRunsAllEpochs) {
  TrainConfig cfg = short_config(6);
  cfg.early.patience = 1;
  cfg.early.enabled = false;
  const Evaluator flat = [](const Detector&, const std::vector<kdlab::data::Scene>&) { return kdlab::eval::EvalReport{}; };
  const TrainResult r =
      train_supervised(DetectorConfig::student(), tiny_dataset(), cfg, DistillConfig::baseline(), 14, flat);
  EXPECT_FALSE(r.early_stopped);
  EXPECT_EQ(r.history.epochs.size(), 6u);
}

TEST(EarlyStopping, TeacherIgnoresPatience) {
  TrainConfig cfg = short_config(5);
  cfg.early.patience = 1;
  const Evaluator flat = [](const Detector&, const std::vector<kdlab::data::Scene>&) { return kdlab::eval::EvalReport{}; };
  const TrainResult r = train_teacher(tiny_dataset(), DetectorConfig::student(), cfg, 15, flat);
  EXPECT_EQ(r.history.epochs.size(), 5u);
}

TEST(RunConfigFile, ParsesKnownKeys) {
  const RunConfig c = parse_run_config("# desk run\nepochs = 12\n temperature=30 # inline\n\nbatch_size = 2\n", "cfg");
  EXPECT_EQ(c.train.schedule.total_epochs, 12u);
  EXPECT_EQ(c.distill.temperature, 30.0);
  EXPECT_EQ(c.train.batch_size, 2u);
  EXPECT_EQ(c.effective().at("epochs"), "12");
}

TEST(RunConfigFile, RejectsUnknownKeysAndBadValues) {
  try {
    parse_run_config("epochs = 3\nlearning_rate = 0.1\n", "run.cfg");
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("run.cfg:2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_run_config("epochs = three\n", "x"), std::invalid_argument);
  EXPECT_THROW(parse_run_config("epochs\n", "x"), std::invalid_argument);
}

TEST(RunConfigFile, EffectiveValuesRoundTrip) {
  RunConfig c;
  c.set("gamma", "0.25");
  c.set("lr_peak", "0.015");
  std::string text;
  for (const auto& [k, v] : c.effective()) text += k + " = " + v + "\n";
  EXPECT_EQ(parse_run_config(text, "x").effective(), c.effective());
}

TEST(RunMeta, RecordsEveryValueSeedAndVersion) {
  const std::string meta = format_run_meta(RunConfig{}, 42, "distill");
  EXPECT_NE(meta.find(std::string("code_version = ") + kCodeVersion), std::string::npos);
  EXPECT_NE(meta.find("seed = 42\n"), std::string::npos);
  for (const auto& k : RunConfig::keys()) EXPECT_NE(meta.find("\n" + k + " = "), std::string::npos) << k;
}
