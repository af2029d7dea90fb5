#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "kdlab/evalkit.hpp"
#include "kdlab/synthdata.hpp"
#include "kdlab/trainkit.hpp"

// Command implementations behind the `kdlab` executable. Each returns the
// process exit code, writes data to `out` and diagnostics to `err`.
namespace kdlab::cli {

namespace fs = std::filesystem;

struct GenDataOptions {
  fs::path out;
  std::size_t n = 600;
  std::uint64_t seed = 0;
  std::size_t size = 48;
  std::size_t classes = 3;
  std::size_t max_objects = 3;
};
int cmd_gen_data(const GenDataOptions& opt, std::ostream& out, std::ostream& err);

struct TrainTeacherOptions {
  fs::path data;
  fs::path out;
  fs::path config;  // empty: defaults
  std::uint64_t seed = 0;
};
int cmd_train_teacher(const TrainTeacherOptions& opt, std::ostream& out, std::ostream& err);

struct DistillOptions {
  fs::path teacher;
  fs::path data;
  fs::path out;
  fs::path config;
  std::optional<double> temperature;
  std::optional<double> gamma;
  std::optional<double> epsilon;
  std::uint64_t seed = 0;
};
int cmd_distill(const DistillOptions& opt, std::ostream& out, std::ostream& err);

struct EvalOptions {
  fs::path model;
  fs::path data;
  std::string split = "test";
  fs::path json;  // empty: <model>.eval.json
  double conf_threshold = 0.01;
  double nms_iou = 0.5;
};
int cmd_eval(const EvalOptions& opt, std::ostream& out, std::ostream& err);

using Predictor = std::function<std::vector<geom::Detection>(const data::Scene&)>;

// Shared tail of `eval`: predicts every scene, prints the report and writes
// the JSON file.
eval::EvalReport run_eval(const Predictor& predictor, const std::vector<data::Scene>& scenes, std::size_t classes,
                          const fs::path& json_path, std::ostream& out);

inline constexpr const char* kSweepHeader = "model,temperature,map50,map50_95";

std::vector<double> default_temperatures();
std::vector<double> parse_temperature_list(const std::string& text);

struct SweepOptions {
  fs::path teacher;
  fs::path data;
  fs::path out;  // CSV; checkpoints and run.meta go next to it
  fs::path config;
  std::vector<double> temperatures = default_temperatures();
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

struct SweepRow {
  std::string model;
  std::optional<double> temperature;
  double map50 = 0.0;
  double map50_95 = 0.0;
};
std::string format_sweep_row(const SweepRow& row);

int cmd_sweep(const SweepOptions& opt, std::ostream& out, std::ostream& err);

// 64-bit FNV-1a of the text, as 16 hex digits.
std::string digest(const std::string& text);

}  // namespace kdlab::cli
