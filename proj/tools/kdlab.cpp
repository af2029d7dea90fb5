#include <iostream>

#include "CLI11.hpp"
#include "kdlab/cli.hpp"

int main(int argc, char** argv) {
  using namespace kdlab::cli;
  CLI::App app{"Object-detection distillation lab"};
  app.require_subcommand(1);

  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--n", gen.n, "Number of scenes");
  gen_cmd->add_option("--seed", gen.seed, "Dataset seed");
  gen_cmd->add_option("--size", gen.size, "Image height and width");
  gen_cmd->add_option("--classes", gen.classes, "Class count");
  gen_cmd->add_option("--max-objects", gen.max_objects, "Objects per scene, at most");

  TrainTeacherOptions tt;
  auto* tt_cmd = app.add_subcommand("train-teacher", "Train the teacher detector");
  tt_cmd->add_option("--data", tt.data, "Dataset directory")->required();
  tt_cmd->add_option("--out", tt.out, "Checkpoint path")->required();
  tt_cmd->add_option("--config", tt.config, "key = value configuration file");
  tt_cmd->add_option("--seed", tt.seed, "Training seed");

  DistillOptions ds;
  double temperature = 0, gamma = 0, epsilon = 0;
  auto* ds_cmd = app.add_subcommand("distill", "Distill a student from a teacher checkpoint");
  ds_cmd->add_option("--teacher", ds.teacher, "Teacher checkpoint")->required();
  ds_cmd->add_option("--data", ds.data, "Dataset directory")->required();
  ds_cmd->add_option("--out", ds.out, "Student checkpoint path")->required();
  ds_cmd->add_option("--config", ds.config, "key = value configuration file");
  auto* t_opt = ds_cmd->add_option("--temperature", temperature, "Distillation temperature");
  auto* g_opt = ds_cmd->add_option("--gamma", gamma, "Soft/hard classification mix");
  auto* e_opt = ds_cmd->add_option("--epsilon", epsilon, "Teacher confidence weight");
  ds_cmd->add_option("--seed", ds.seed, "Training seed");

  EvalOptions ev;
  auto* ev_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  ev_cmd->add_option("--model", ev.model, "Checkpoint")->required();
  ev_cmd->add_option("--data", ev.data, "Dataset directory")->required();
  ev_cmd->add_option("--split", ev.split, "train, val or test");
  ev_cmd->add_option("--json", ev.json, "Report path (default <model>.eval.json)");

  SweepOptions sw;
  std::string temps = "25,30,35,40,45";
  auto* sw_cmd = app.add_subcommand("sweep", "Baseline plus one distilled student per temperature");
  sw_cmd->add_option("--teacher", sw.teacher, "Teacher checkpoint")->required();
  sw_cmd->add_option("--data", sw.data, "Dataset directory")->required();
  sw_cmd->add_option("--out", sw.out, "CSV report path")->required();
  sw_cmd->add_option("--config", sw.config, "key = value configuration file");
  sw_cmd->add_option("--temperatures", temps, "Comma-separated temperatures");
  sw_cmd->add_option("--seed", sw.seed, "Training seed");
  sw_cmd->add_option("--jobs", sw.jobs, "Concurrent sub-runs");

  CLI11_PARSE(app, argc, argv);

  if (*gen_cmd) return cmd_gen_data(gen, std::cout, std::cerr);
  if (*tt_cmd) return cmd_train_teacher(tt, std::cout, std::cerr);
  if (*ds_cmd) {
    if (*t_opt) ds.temperature = temperature;
    if (*g_opt) ds.gamma = gamma;
    if (*e_opt) ds.epsilon = epsilon;
    return cmd_distill(ds, std::cout, std::cerr);
  }
  if (*ev_cmd) return cmd_eval(ev, std::cout, std::cerr);
  if (*sw_cmd) {
    try {
      sw.temperatures = parse_temperature_list(temps);
    } catch (const std::exception& e) {
      std::cerr << "kdlab sweep: " << e.what() << "\n";
      return 1;
    }
    return cmd_sweep(sw, std::cout, std::cerr);
  }
  return 1;
}
