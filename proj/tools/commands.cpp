#include "commands.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include "vamamba/bench.hpp"
#include "vamamba/gradient_suite.hpp"
#include "vamamba/image_io.hpp"
#include "vamamba/path_planner.hpp"

namespace vamamba::cli {

namespace fs = std::filesystem;

RunConfig resolve_config(const Overrides& o) {
  RunConfig cfg = o.config_path.empty() ? RunConfig{} : load_run_config(o.config_path);
  if (o.seed) cfg.train.seed = *o.seed;
  if (o.steps) cfg.train.total_steps = *o.steps;
  if (!o.path_mode.empty()) cfg.set("model.path_mode", o.path_mode);
  if (!o.k_paths.empty()) cfg.set("model.k_paths", o.k_paths);
  cfg.validate();
  return cfg;
}

void print_config(const RunConfig& cfg) {
  std::cout << "# resolved configuration\n" << cfg.to_text() << std::flush;
}

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << text;
  if (!f) throw IoError("write failed for " + path);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

void print_model_config(const Model& m) {
  std::cout << "# resolved configuration\n" << m.cfg.to_text() << std::flush;
}

Tensor restore_image(Model& model, const Tensor& image) {
  NoGradScope no_grad;
  return model.forward(image);
}

}  // namespace

int cmd_train(const Overrides& o, const std::string& out_dir) {
  const RunConfig cfg = resolve_config(o);
  print_config(cfg);
  ensure_dir(out_dir);
  const std::string trace_path = (fs::path(out_dir) / "trace.tsv").string();
  const std::string ckpt_path = (fs::path(out_dir) / "model.ckpt").string();

  Model model = Model::init(cfg.model, cfg.train.seed);
  auto source = make_source(cfg.train.data_dir);
  std::ofstream trace(trace_path, std::ios::binary);
  if (!trace) throw IoError("cannot open " + trace_path + " for writing");
  trace << trace_header();
  TrainResult r = train_loop(model, *source, cfg.train, [&](const TraceRow& row) {
    trace << trace_line(row);
    if (row.psnr) std::cout << trace_line(row) << std::flush;
  });
  trace.close();
  save_checkpoint(ckpt_path, model, cfg.checkpoint_dtype);

  std::cout << "checkpoint=" << ckpt_path << "\ntrace=" << trace_path << "\n";
  if (r.aborted) {
    std::cerr << "training aborted: " << r.abort_reason << " (last good parameters saved)\n";
    return numeric_error;
  }
  std::cout << "noisy_psnr=" << format_psnr(r.noisy_psnr) << "\nrestored_psnr="
            << format_psnr(r.final_psnr) << "\nheld_out_loss=" << r.final_loss << "\n";
  return ok;
}

int cmd_restore(const std::string& checkpoint, const std::string& input, const std::string& output) {
  Model model = load_checkpoint(checkpoint);
  print_model_config(model);
  const ImageFile file = read_pnm(input);
  Tensor image = read_image(input);
  Tensor restored = restore_image(model, image);
  write_image(restored, output, file.channels == 1);
  std::cout << "restored " << input << " -> " << output << "\n";
  return ok;
}

int cmd_gradcheck(const Overrides& o) {
  const RunConfig cfg = resolve_config(o);
  print_config(cfg);
  GradientSuiteOptions options;
  options.model = cfg.model;
  if (o.seed) options.seed = *o.seed;
  const auto results = run_gradient_suite(options);
  std::cout << format_gradient_report(results);
  for (const auto& r : results) {
    if (!r.passed) return tolerance_breach;
  }
  return ok;
}

int cmd_plan_path(const Overrides& o, const std::string& checkpoint, const std::string& input,
                  const std::string& svg_out, std::size_t block) {
  Model model = [&] {
    if (!checkpoint.empty()) return load_checkpoint(checkpoint);
    const RunConfig cfg = resolve_config(o);
    return Model::init(cfg.model, cfg.train.seed);
  }();
  print_model_config(model);
  if (model.cfg.path_mode != PathMode::adaptive) {
    throw ConfigError("plan-path needs model.path_mode=adaptive");
  }
  const std::size_t blocks = model.cfg.groups * model.cfg.blocks_per_group;
  if (block >= blocks) {
    throw ConfigError("block " + std::to_string(block) + " out of range (model has " +
                      std::to_string(blocks) + " blocks)");
  }
  Tensor image = read_image(input);
  ForwardProbe probe;
  {
    NoGradScope no_grad;
    model.forward(image, &probe);
  }
  const ScoreMap& scores = probe.scores.at(block).at(0);
  const ScanPath& path = probe.paths.at(block).at(0);

  const std::string svg = path_to_svg(path, scores.probs);
  write_text(svg_out, svg);
  const std::string txt_out = fs::path(svg_out).replace_extension(".txt").string();
  write_text(txt_out, path_to_text(path.forward));

  std::cout << "grid=" << scores.grid << "\nscores:\n" << scores.to_text(false) << "path: "
            << path_to_text(path.forward) << "svg=" << svg_out << "\npath_file=" << txt_out << "\n";
  return ok;
}

int cmd_bench_scan(const Overrides& o, bool k_only) {
  const RunConfig cfg = resolve_config(o);
  print_config(cfg);
  const auto rows = k_only ? bench_k_paths(cfg) : bench_scan(cfg);
  std::cout << format_bench_table(rows);
  std::vector<BenchRow> adaptive_k;
  for (const auto& r : rows) {
    if (r.path_mode == cfg.model.path_mode || k_only) adaptive_k.push_back(r);
  }
  std::cout << check_k_paths_trend(adaptive_k).report;
  return ok;
}

int cmd_init(const Overrides& o, const std::string& out, bool identity) {
  const RunConfig cfg = resolve_config(o);
  print_config(cfg);
  Model model = Model::init(cfg.model, cfg.train.seed);
  if (identity) model.make_identity();
  save_checkpoint(out, model, cfg.checkpoint_dtype);
  std::cout << "checkpoint=" << out << (identity ? " (identity)" : "") << "\nparameters="
            << model.parameter_count() << "\n";
  return ok;
}

int cmd_report(const std::string& checkpoint, const std::string& input) {
  Model model = load_checkpoint(checkpoint);
  print_model_config(model);
  Tensor image = read_image(input);
  ForwardProbe probe;
  {
    NoGradScope no_grad;
    model.forward(image);
    model.forward(image, &probe);
  }
  std::cout << "parameters=" << model.parameter_count() << "\n";
  const auto caches = model.caches();
  for (std::size_t i = 0; i < caches.size(); ++i) {
    std::cout << caches[i]->stats_text("block" + std::to_string(i) + ".cache");
  }
  for (std::size_t i = 0; i < probe.paths.size(); ++i) {
    if (!probe.paths[i].empty()) {
      std::cout << "block" << i << ".path=" << path_to_text(probe.paths[i][0].forward);
    }
  }
  return ok;
}

}  // namespace vamamba::cli
