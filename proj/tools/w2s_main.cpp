// Command-line front end for the experiment harness.
//
//   w2s distill --config cfg.json [--seed N] [--out DIR] [--data-dir DIR]
//   w2s eval --config cfg.json --checkpoint run/seed_0/final.w2sc
//   w2s report --out DIR
//
// Exit status: 0 success, 1 other failure, 2 config error, 3 aborted training.

#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "w2s/checkpoint.hpp"
#include "w2s/errors.hpp"
#include "w2s/harness.hpp"

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> data_dir;
};

w2s::ExperimentConfig load(const Globals& g) {
  if (g.config.empty()) throw w2s::ConfigError("--config is required");
  auto cfg = w2s::load_experiment_config(g.config);
  if (g.seed) cfg.seeds = {*g.seed};
  if (g.out) cfg.out_dir = *g.out;
  if (g.data_dir) cfg.dataset.data_dir = *g.data_dir;
  return cfg;
}

void print_result(const w2s::ExperimentResult& result) {
  for (const auto& run : result.runs) {
    const auto t1 = run.top1();
    std::printf("%-32s %-9s top1 %7.3f +- %.3f (%zu seeds)", run.run_id.c_str(), w2s::to_string(run.method).c_str(),
                t1.mean, t1.std, run.seeds.size());
    if (run.delta) std::printf("  delta %+.3f vs %s", *run.delta, run.reference.c_str());
    std::printf("\n");
  }
  std::printf("wall clock %.1f s\n", result.wall_clock_s);
}

int run_kind(const Globals& g, std::initializer_list<w2s::ExperimentKind> allowed, const char* sub) {
  auto cfg = load(g);
  if (std::find(allowed.begin(), allowed.end(), cfg.kind) == allowed.end()) {
    throw w2s::ConfigError(std::string("'") + sub + "' cannot run an experiment of kind " + w2s::to_string(cfg.kind));
  }
  print_result(w2s::run_experiment(cfg));
  return 0;
}

int eval_checkpoint(const Globals& g, const std::string& checkpoint) {
  const auto cfg = load(g);
  const auto model = w2s::restore_model(w2s::load_checkpoint(checkpoint));
  const auto data = w2s::prepare_data(cfg.dataset);
  if (model.config().num_classes != data.test.num_classes) {
    throw w2s::ConfigError("checkpoint predicts " + std::to_string(model.config().num_classes) +
                           " classes, test split has " + std::to_string(data.test.num_classes));
  }
  const auto m = w2s::evaluate(model, data.test, {1, 5});
  nlohmann::json j = {{"checkpoint", checkpoint}, {"count", m.count}, {"top1", 100.0 * m.top(1)},
                      {"top5", 100.0 * m.top(5)}, {"loss", m.loss}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

int report(const Globals& g, std::string summary) {
  if (summary.empty()) {
    if (!g.out) throw w2s::ConfigError("report needs --summary or --out");
    summary = (std::filesystem::path(*g.out) / "summary.json").string();
  }
  const auto result = w2s::read_summary(summary);
  const auto dir = g.out ? std::filesystem::path(*g.out) : std::filesystem::path(summary).parent_path();
  w2s::emit_report(result.runs, dir, nullptr);
  print_result(result);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weak-to-strong distillation experiments"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON experiment config");
  app.add_option("--seed", g.seed, "Run a single seed instead of the configured list");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--data-dir", g.data_dir, "Dataset root (overrides W2S_DATA_DIR)");

  auto* train = app.add_subcommand("train", "Train the strong model from scratch");
  auto* distill = app.add_subcommand("distill", "Weak-to-strong distillation with or without ground truth");
  auto* noise = app.add_subcommand("noise", "Distillation on noisy labels");
  auto* fewshot = app.add_subcommand("fewshot", "Base-class training plus episodic evaluation");
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the config's test split");
  std::string checkpoint;
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  auto* rep = app.add_subcommand("report", "Rewrite CSV reports from summary.json");
  std::string summary;
  rep->add_option("--summary", summary, "summary.json path (default: <out>/summary.json)");
  for (auto* sub : {train, distill, noise, fewshot, eval, rep}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  using K = w2s::ExperimentKind;
  try {
    if (*train) return run_kind(g, {K::Scratch}, "train");
    if (*distill) return run_kind(g, {K::W2sGt, K::W2sNoGt}, "distill");
    if (*noise) return run_kind(g, {K::Noisy}, "noise");
    if (*fewshot) return run_kind(g, {K::FewShot}, "fewshot");
    if (*eval) return eval_checkpoint(g, checkpoint);
    if (*rep) return report(g, summary);
  } catch (const w2s::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const w2s::TrainingAborted& e) {
    std::cerr << "training aborted: " << e.what() << "\n";
    if (!e.checkpoint().empty()) std::cerr << "state saved to " << e.checkpoint() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
