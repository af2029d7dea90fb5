#include "kdlab/cli.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <future>
#include <ostream>
#include <sstream>

#include "kdlab/binio.hpp"
#include "kdlab/detector.hpp"

namespace kdlab::cli {

namespace {

fs::path sibling(const fs::path& p, const std::string& suffix) { return p.parent_path() / (p.stem().string() + suffix); }

std::string fmt_num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

void write_text(const fs::path& path, const std::string& text) {
  io::write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

train::RunConfig load_config(const fs::path& path, std::size_t classes) {
  train::RunConfig cfg = path.empty() ? train::RunConfig{} : train::load_run_config(path);
  cfg.teacher.classes = classes;
  cfg.student.classes = classes;
  return cfg;
}

void print_config(std::ostream& out, const std::string& meta) {
  std::istringstream in(meta);
  std::string line;
  while (std::getline(in, line)) out << "# " << line << "\n";
}

template <typename F>
int guarded(std::ostream& err, const char* command, F&& body) {
  try {
    return body();
  } catch (const std::exception& e) {
    err << "kdlab " << command << ": " << e.what() << "\n";
    return 1;
  }
}

void write_run_outputs(const train::TrainResult& r, const fs::path& ckpt, const std::string& meta) {
  det::save_checkpoint(r.best, ckpt);
  eval::emit_curves(r.history, sibling(ckpt, ".history.csv"));
  write_text(sibling(ckpt, ".run.meta"), meta);
}

}  // namespace

std::string digest(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

int cmd_gen_data(const GenDataOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, "gen-data", [&] {
    out << "# out = " << opt.out.string() << "\n# n = " << opt.n << "\n# seed = " << opt.seed
        << "\n# size = " << opt.size << "\n# classes = " << opt.classes << "\n# max_objects = " << opt.max_objects
        << "\n";
    data::SceneParams params{opt.size, opt.size, opt.max_objects, opt.classes};
    const data::Dataset ds = data::generate_dataset(opt.n, opt.seed, params);
    data::save_dataset(ds, opt.out);
    out << "train=" << ds.train.size() << " val=" << ds.val.size() << " test=" << ds.test.size() << "\n";
    return 0;
  });
}

int cmd_train_teacher(const TrainTeacherOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, "train-teacher", [&] {
    const data::Dataset ds = data::load_dataset(opt.data);
    const train::RunConfig cfg = load_config(opt.config, ds.manifest.params.classes);
    const std::string meta = train::format_run_meta(cfg, opt.seed, "train-teacher");
    print_config(out, meta);
    const train::TrainResult r = train::train_teacher(ds, cfg.teacher, cfg.train, opt.seed);
    write_run_outputs(r, opt.out, meta);
    char line[96];
    std::snprintf(line, sizeof line, "val_map50=%.6f best_epoch=%zu\n", r.best_map50, r.best_epoch);
    out << line;
    return 0;
  });
}

int cmd_distill(const DistillOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, "distill", [&] {
    const det::Detector teacher = det::load_checkpoint(opt.teacher);
    const data::Dataset ds = data::load_dataset(opt.data);
    train::RunConfig cfg = load_config(opt.config, ds.manifest.params.classes);
    if (opt.temperature) cfg.distill.temperature = *opt.temperature;
    if (opt.gamma) cfg.distill.gamma = *opt.gamma;
    if (opt.epsilon) cfg.distill.epsilon = *opt.epsilon;
    const std::string meta = train::format_run_meta(cfg, opt.seed, "distill");
    print_config(out, meta);
    const train::TrainResult r = train::distill_student(teacher, cfg.student, cfg.distill, ds, cfg.train, opt.seed);
    write_run_outputs(r, opt.out, meta);
    char line[96];
    std::snprintf(line, sizeof line, "val_map50=%.6f best_epoch=%zu early_stopped=%d\n", r.best_map50, r.best_epoch,
                  r.early_stopped ? 1 : 0);
    out << line;
    return 0;
  });
}

eval::EvalReport run_eval(const Predictor& predictor, const std::vector<data::Scene>& scenes, std::size_t classes,
                          const fs::path& json_path, std::ostream& out) {
  std::vector<std::vector<geom::Detection>> preds;
  std::vector<std::vector<loss::LabeledBox>> gts;
  for (const auto& s : scenes) {
    preds.push_back(predictor(s));
    gts.push_back(s.annotations);
  }
  const eval::EvalReport rep = eval::evaluate(preds, gts, classes);
  char buf[256];
  std::snprintf(buf, sizeof buf, "images=%zu\nmap50=%.6f\nmap50_95=%.6f\nprecision=%.6f\nrecall=%.6f\n", rep.images,
                rep.map50, rep.map50_95, rep.precision, rep.recall);
  out << buf;
  write_text(json_path, eval::report_to_json(rep));
  return rep;
}

int cmd_eval(const EvalOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, "eval", [&] {
    out << "# model = " << opt.model.string() << "\n# data = " << opt.data.string() << "\n# split = " << opt.split
        << "\n# conf_threshold = " << fmt_num(opt.conf_threshold) << "\n# nms_iou = " << fmt_num(opt.nms_iou)
        << "\n";
    const det::Detector model = det::load_checkpoint(opt.model);
    const data::Dataset ds = data::load_dataset(opt.data);
    const auto& scenes = ds.split(opt.split);
    const fs::path json = opt.json.empty() ? sibling(opt.model, ".eval.json") : opt.json;
    run_eval([&](const data::Scene& s) { return det::predict(model, s.image, opt.conf_threshold, opt.nms_iou); },
             scenes, model.config().classes, json, out);
    return 0;
  });
}

std::vector<double> default_temperatures() { return {25.0, 30.0, 35.0, 40.0, 45.0}; }

std::vector<double> parse_temperature_list(const std::string& text) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    const std::string item = text.substr(pos, comma - pos);
    double v = 0.0;
    const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || res.ec != std::errc() || res.ptr != item.data() + item.size() || !(v > 0.0)) {
      throw std::invalid_argument("invalid temperature '" + item + "' in list '" + text + "'");
    }
    out.push_back(v);
    pos = comma + 1;
  }
  return out;
}

std::string format_sweep_row(const SweepRow& row) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s,%s,%.6f,%.6f", row.model.c_str(),
                row.temperature ? fmt_num(*row.temperature).c_str() : "-", row.map50, row.map50_95);
  return buf;
}

int cmd_sweep(const SweepOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, "sweep", [&] {
    if (opt.temperatures.empty()) throw std::invalid_argument("temperature list is empty");
    const det::Detector teacher = det::load_checkpoint(opt.teacher);
    const data::Dataset ds = data::load_dataset(opt.data);
    const train::RunConfig cfg = load_config(opt.config, ds.manifest.params.classes);

    std::string temps;
    for (double t : opt.temperatures) temps += (temps.empty() ? "" : ",") + fmt_num(t);
    std::string meta = train::format_run_meta(cfg, opt.seed, "sweep");
    meta += "temperatures = " + temps + "\n";
    meta += "config_digest = " + digest(meta) + "\n";
    print_config(out, meta);
    write_text(sibling(opt.out, ".run.meta"), meta);

    struct SubRun {
      std::string model;
      std::optional<double> temperature;
      std::string tag;
    };
    std::vector<SubRun> runs{{"baseline", std::nullopt, "baseline"}};
    for (double t : opt.temperatures) runs.push_back({"distilled", t, "T" + fmt_num(t)});

    auto execute = [&](const SubRun& run) {
      train::TrainResult r = run.temperature ? [&] {
        loss::DistillConfig dc = cfg.distill;
        dc.temperature = *run.temperature;
        return train::distill_student(teacher, cfg.student, dc, ds, cfg.train, opt.seed);
      }()
                                             : train::train_supervised(cfg.student, ds, cfg.train, cfg.distill, opt.seed);
      const fs::path ckpt = sibling(opt.out, "." + run.tag + ".ckpt");
      write_run_outputs(r, ckpt, meta);
      const eval::EvalReport rep =
          train::evaluate_detector(r.best, ds.test, cfg.train.conf_threshold, cfg.train.nms_iou);
      return SweepRow{run.model, run.temperature, rep.map50, rep.map50_95};
    };

    std::ofstream csv(opt.out, std::ios::trunc);
    if (!csv) throw std::runtime_error("cannot write " + opt.out.string());
    csv << kSweepHeader << "\n" << std::flush;
    out << kSweepHeader << "\n";

    const std::size_t jobs = std::max<std::size_t>(1, opt.jobs);
    for (std::size_t begin = 0; begin < runs.size(); begin += jobs) {
      const std::size_t end = std::min(runs.size(), begin + jobs);
      std::vector<std::future<SweepRow>> pending;
      for (std::size_t i = begin; i < end; ++i) {
        pending.push_back(std::async(jobs == 1 ? std::launch::deferred : std::launch::async, execute, runs[i]));
      }
      for (auto& f : pending) {
        const std::string line = format_sweep_row(f.get());
        csv << line << "\n" << std::flush;
        out << line << "\n";
      }
    }
    if (!csv) throw std::runtime_error("write failed for " + opt.out.string());
    return 0;
  });
}

}  // namespace kdlab::cli
