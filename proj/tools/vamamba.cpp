// vamamba: train, restore and inspect desk-scale restoration models.

#include <CLI11.hpp>

#include <iostream>

#include "commands.hpp"

using namespace vamamba;

namespace {

void add_overrides(CLI::App* cmd, cli::Overrides& o, bool with_steps = true) {
  cmd->add_option("--config", o.config_path, "key=value configuration file");
  cmd->add_option("--seed", o.seed, "random seed (overrides train.seed)");
  if (with_steps) cmd->add_option("--steps", o.steps, "training steps (overrides train.steps)");
  cmd->add_option("--path-mode", o.path_mode, "adaptive, raster, snake, bidirectional or local")
      ->check(CLI::IsMember({"adaptive", "raster", "snake", "bidirectional", "local"}));
  cmd->add_option("--k-paths", o.k_paths, "scan directions: 1f, 1b, 2 or 4")
      ->check(CLI::IsMember({"1f", "1b", "2", "4"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"VAMamba desk-scale restoration toolkit"};
  app.require_subcommand(1);

  cli::Overrides o;
  std::string out, checkpoint, input;
  bool identity = false, k_only = false;
  std::size_t block = 0;

  auto* train = app.add_subcommand("train", "train a model and write checkpoint + trace");
  add_overrides(train, o);
  train->add_option("--out", out, "output directory")->required();

  auto* restore = app.add_subcommand("restore", "restore an image with a checkpoint");
  restore->add_option("--checkpoint", checkpoint)->required();
  restore->add_option("--input", input, "P5/P6 image")->required();
  restore->add_option("--out", out, "output image")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  add_overrides(gradcheck, o, false);

  auto* plan = app.add_subcommand("plan-path", "score an image and draw its scan path");
  add_overrides(plan, o, false);
  plan->add_option("--checkpoint", checkpoint, "trained model (default: freshly initialized)");
  plan->add_option("--input", input, "P5/P6 image")->required();
  plan->add_option("--out", out, "SVG output; the path text goes next to it as .txt")->required();
  plan->add_option("--block", block, "block whose scorer is used (0-based)");

  auto* bench = app.add_subcommand("bench-scan", "train one tiny model per scan configuration");
  add_overrides(bench, o);
  bench->add_flag("--k-only", k_only, "only compare k = 1f, 1b, 2");

  auto* init = app.add_subcommand("init", "write a freshly initialized checkpoint");
  add_overrides(init, o, false);
  init->add_option("--out", out, "checkpoint path")->required();
  init->add_flag("--identity", identity, "α = β = 0 and zero reconstruction: the identity model");

  auto* report = app.add_subcommand("report", "cache statistics and scan paths for one image");
  report->add_option("--checkpoint", checkpoint)->required();
  report->add_option("--input", input, "P5/P6 image")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::config_error;
  }

  try {
    if (*train) return cli::cmd_train(o, out);
    if (*restore) return cli::cmd_restore(checkpoint, input, out);
    if (*gradcheck) return cli::cmd_gradcheck(o);
    if (*plan) return cli::cmd_plan_path(o, checkpoint, input, out, block);
    if (*bench) return cli::cmd_bench_scan(o, k_only);
    if (*init) return cli::cmd_init(o, out, identity);
    if (*report) return cli::cmd_report(checkpoint, input);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return cli::config_error;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return cli::io_error;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return cli::numeric_error;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return cli::config_error;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return cli::ok;
}
