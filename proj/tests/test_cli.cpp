#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "kdlab/binio.hpp"
#include "kdlab/cli.hpp"
#include "support.hpp"

using namespace kdlab::cli;

namespace {

std::string slurp(const fs::path& p) {
  const auto b = kdlab::io::read_file(p);
  return {b.begin(), b.end()};
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::string> data_lines(const std::string& text) {
  std::vector<std::string> out;
  for (auto& l : lines_of(text))
    if (l.empty() || l[0] != '#') out.push_back(l);
  return out;
}

}  // namespace

TEST(GenData, PrintsSplitSizes) {
  std::ostringstream out, err;
  GenDataOptions opt;
  opt.out = testsupport::scratch_dir("cli_gen600");
  opt.seed = 3;
  ASSERT_EQ(cmd_gen_data(opt, out, err), 0) << err.str();
  EXPECT_EQ(data_lines(out.str()), std::vector<std::string>{"train=480 val=60 test=60"});
  EXPECT_TRUE(err.str().empty());
}

TEST(GenData, RerunIsByteIdentical) {
  GenDataOptions a;
  a.n = 30;
  a.seed = 4;
  a.out = testsupport::scratch_dir("cli_gen_a");
  GenDataOptions b = a;
  b.out = testsupport::scratch_dir("cli_gen_b");
  std::ostringstream out, err;
  ASSERT_EQ(cmd_gen_data(a, out, err), 0);
  ASSERT_EQ(cmd_gen_data(b, out, err), 0);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a.out)) {
    if (!e.is_regular_file()) continue;
    ++files;
    EXPECT_EQ(slurp(e.path()), slurp(b.out / fs::relative(e.path(), a.out)));
  }
  EXPECT_EQ(files, 61u);
}

TEST(GenData, RejectsTooFewScenes) {
  GenDataOptions opt;
  opt.n = 5;
  opt.out = testsupport::scratch_dir("cli_gen5");
  std::ostringstream out, err;
  EXPECT_NE(cmd_gen_data(opt, out, err), 0);
  EXPECT_FALSE(err.str().empty());
}

TEST(Eval, PerfectStubPredictor) {
  const auto ds = kdlab::data::generate_dataset(20, 5, kdlab::data::SceneParams{});
  const Predictor perfect = [](const kdlab::data::Scene& s) {
    std::vector<kdlab::geom::Detection> d;
    for (const auto& g : s.annotations) d.push_back({g.box, g.class_index, 1.0});
    return d;
  };
  std::ostringstream out;
  const auto json = testsupport::scratch_dir("cli_eval") / "r.json";
  const auto rep = run_eval(perfect, ds.test, 3, json, out);
  EXPECT_NE(out.str().find("map50=1.000000\n"), std::string::npos) << out.str();
  EXPECT_NE(out.str().find("map50_95=1.000000\n"), std::string::npos);
  EXPECT_EQ(rep.map50, 1.0);
  EXPECT_TRUE(fs::exists(json));
}

TEST(Eval, MissingCheckpointNamesPath) {
  GenDataOptions g;
  g.n = 10;
  g.out = testsupport::scratch_dir("cli_eval_data");
  std::ostringstream out, err;
  ASSERT_EQ(cmd_gen_data(g, out, err), 0);
  EvalOptions e;
  e.model = "/nonexistent/student.ckpt";
  e.data = g.out;
  EXPECT_NE(cmd_eval(e, out, err), 0);
  EXPECT_NE(err.str().find("/nonexistent/student.ckpt"), std::string::npos) << err.str();
}

TEST(Sweep, TemperatureLists) {
  EXPECT_EQ(default_temperatures(), (std::vector<double>{25, 30, 35, 40, 45}));
  EXPECT_EQ(parse_temperature_list("25,30,35,40,45"), default_temperatures());
  EXPECT_EQ(parse_temperature_list("2.5"), std::vector<double>{2.5});
  EXPECT_THROW(parse_temperature_list(""), std::invalid_argument);
  EXPECT_THROW(parse_temperature_list("25,,30"), std::invalid_argument);
  EXPECT_THROW(parse_temperature_list("25,-1"), std::invalid_argument);
}

TEST(Sweep, RowFormat) {
  EXPECT_EQ(format_sweep_row({"baseline", std::nullopt, 0.5, 0.25}), "baseline,-,0.500000,0.250000");
  EXPECT_EQ(format_sweep_row({"distilled", 35.0, 0.9675, 0.7456}), "distilled,35,0.967500,0.745600");
}

TEST(Sweep, TinyRunShapeAndConsistency) {
  const auto dir = testsupport::scratch_dir("cli_sweep");
  GenDataOptions g;
  g.n = 12;
  g.seed = 6;
  g.out = dir / "data";
  std::ostringstream out, err;
  ASSERT_EQ(cmd_gen_data(g, out, err), 0);
  kdlab::det::save_checkpoint(kdlab::det::Detector::build(kdlab::det::DetectorConfig::teacher(), 7), dir / "t.ckpt");
  {
    std::ofstream cfg(dir / "run.cfg");
    cfg << "epochs = 2\nwarmup_epochs = 1\nbatch_size = 4\n";
  }
  SweepOptions s;
  s.teacher = dir / "t.ckpt";
  s.data = g.out;
  s.out = dir / "sweep.csv";
  s.config = dir / "run.cfg";
  s.temperatures = {25, 30};
  s.seed = 8;
  std::ostringstream sout;
  ASSERT_EQ(cmd_sweep(s, sout, err), 0) << err.str();
  const auto rows = lines_of(slurp(s.out));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0], kSweepHeader);
  EXPECT_EQ(rows[1].rfind("baseline,-,", 0), 0u);
  EXPECT_EQ(rows[2].rfind("distilled,25,", 0), 0u);
  EXPECT_EQ(rows[3].rfind("distilled,30,", 0), 0u);
  const std::string meta = slurp(dir / "sweep.run.meta");
  EXPECT_NE(meta.find("temperatures = 25,30\n"), std::string::npos);
  EXPECT_NE(meta.find("config_digest = "), std::string::npos);

  EvalOptions e;
  e.model = dir / "sweep.baseline.ckpt";
  e.data = g.out;
  std::ostringstream eout;
  ASSERT_EQ(cmd_eval(e, eout, err), 0) << err.str();
  std::string map50;
  for (const auto& l : lines_of(eout.str()))
    if (l.rfind("map50=", 0) == 0) map50 = l.substr(6);
  EXPECT_EQ(rows[1].substr(11, map50.size()), map50);

  // A second sweep with the same flags reproduces the report byte for byte.
  SweepOptions again = s;
  again.out = dir / "again.csv";
  std::ostringstream aout;
  ASSERT_EQ(cmd_sweep(again, aout, err), 0);
  EXPECT_EQ(slurp(again.out), slurp(s.out));
}

TEST(Sweep, MissingTeacherFails) {
  SweepOptions s;
  s.teacher = "/nonexistent/t.ckpt";
  s.data = "/nonexistent/data";
  s.out = testsupport::scratch_dir("cli_sweep_fail") / "s.csv";
  std::ostringstream out, err;
  EXPECT_NE(cmd_sweep(s, out, err), 0);
  EXPECT_NE(err.str().find("/nonexistent/t.ckpt"), std::string::npos);
}

TEST(Digest, StableHex) {
  EXPECT_EQ(digest(""), "cbf29ce484222325");
  EXPECT_EQ(digest("a"), "af63dc4c8601ec8c");
  EXPECT_EQ(digest("abc").size(), 16u);
}
