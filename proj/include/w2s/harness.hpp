#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "w2s/data.hpp"
#include "w2s/losses.hpp"
#include "w2s/models.hpp"
#include "w2s/training.hpp"

namespace w2s {

enum class ExperimentKind { Scratch, W2sGt, W2sNoGt, Noisy, FewShot };

std::string to_string(ExperimentKind kind);
ExperimentKind kind_from_string(const std::string& name);

struct DatasetSpec {
  std::string source = "synth";  // synth | idx | cifar10 | cifar100
  SynthSpec synth;
  std::optional<std::string> data_dir;
  double val_fraction = 0.1;   // carved from the training pool
  double test_fraction = 0.2;  // synth only: share of the generated pool held out
  std::size_t max_train = 0;   // 0 keeps everything
  std::size_t max_test = 0;
  std::uint64_t split_seed = 0;
  // Class shares of the base / validation / novel splits for few-shot runs.
  std::array<double, 3> class_split{0.64, 0.16, 0.20};
  // Per-channel (x - mean) / std with statistics of the training split,
  // applied to every split.
  bool standardize = false;
};

void to_json(nlohmann::json& j, const SynthSpec& s);
void from_json(const nlohmann::json& j, SynthSpec& s);
void to_json(nlohmann::json& j, const DatasetSpec& d);
void from_json(const nlohmann::json& j, DatasetSpec& d);
void to_json(nlohmann::json& j, const NoiseSpec& n);
void from_json(const nlohmann::json& j, NoiseSpec& n);
void to_json(nlohmann::json& j, const EpisodeSpec& e);
void from_json(const nlohmann::json& j, EpisodeSpec& e);

struct ExperimentConfig {
  std::string name = "experiment";
  ExperimentKind kind = ExperimentKind::Scratch;
  ModelConfig weak;
  ModelConfig strong;
  DatasetSpec dataset;
  std::optional<NoiseSpec> noise;       // noisy only
  std::optional<EpisodeSpec> episodes;  // fewshot only
  LossConfig loss;
  OptimConfig optim;                        // student and scratch reference
  std::optional<OptimConfig> teacher_optim;  // defaults to optim
  double teacher_fraction = 1.0;             // share of the training split the weak model sees
  std::size_t warmup_epochs = 0;
  bool augment = false;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::string out_dir = "runs";
  bool save_checkpoints = true;

  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& cfg);
void from_json(const nlohmann::json& j, ExperimentConfig& cfg);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct PreparedData {
  Dataset train;
  Dataset val;
  Dataset test;
};

PreparedData prepare_data(const DatasetSpec& spec);

struct ChannelStats {
  std::vector<double> mean, std;
};

ChannelStats channel_stats(const Dataset& ds);
// std below 1e-12 is treated as 1.
void standardize(Dataset& ds, const ChannelStats& stats);

struct BetaSummary {
  double mean = 0.0;
  double frac_half = 0.0;
  std::size_t count = 0;
  std::array<std::size_t, kBetaBins> histogram{};

  static BetaSummary of(const BetaRecord& rec);
};

struct EpochSummary {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::optional<double> top1, top5, loss;  // validation split
  std::optional<BetaSummary> beta;
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::size_t final_epoch = 0;
  double top1 = 0.0;  // test top-1, or mean episode accuracy for few-shot
  std::optional<double> top5;
  std::optional<double> loss;
  std::optional<double> ci95;  // few-shot only
  std::optional<BetaSummary> beta;
  std::vector<EpochSummary> epochs;
};

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single seed
};

Aggregate aggregate(std::span<const double> values);

struct RunResult {
  std::string run_id;
  ExperimentKind kind = ExperimentKind::Scratch;
  Method method = Method::CE;
  std::string role;   // teacher | student | scratch
  std::string split;  // test | novel
  std::vector<SeedResult> seeds;
  // Difference of mean top-1 against `reference` (student-from-scratch when
  // ground truth is used, the weak teacher otherwise).
  std::optional<double> delta;
  std::string reference;

  Aggregate top1() const;
  std::optional<Aggregate> top5() const;
};

void to_json(nlohmann::json& j, const RunResult& r);
void from_json(const nlohmann::json& j, RunResult& r);

struct ExperimentResult {
  nlohmann::json config;
  std::vector<RunResult> runs;  // primary run first
  double wall_clock_s = 0.0;
  bool complete = true;

  const RunResult& primary() const { return runs.front(); }
  const RunResult* find(const std::string& role) const;
};

/**
 * Runs every seed of an experiment and writes its report into cfg.out_dir.
 * A TrainingAborted from any sub-run is rethrown after the partial results
 * have been written.
 */
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Few-shot evaluation.
using EmbedFn = std::function<Tensor<float>(const Tensor<float>& images)>;

struct FewShotScore {
  double mean = 0.0;
  double ci95 = 0.0;
  std::vector<double> accuracies;
  std::size_t zero_norm = 0;  // embeddings whose norm fell below the clamp
};

// 1.96 * sample std / sqrt(n).
double confidence_interval95(std::span<const double> accuracies);

// Query accuracy of cosine nearest-centroid classification for one episode.
double episode_accuracy(const Tensor<float>& support, std::span<const int> support_labels,
                        const Tensor<float>& query, std::span<const int> query_labels,
                        std::size_t n_way, std::size_t* zero_norm = nullptr);

FewShotScore nearest_centroid_eval(const EmbedFn& embed, const Dataset& ds, const EpisodeSpec& spec);

// Reports.
inline constexpr int kReportFormatVersion = 1;

std::string results_csv(const std::vector<RunResult>& runs);
std::string epochs_csv(const std::vector<RunResult>& runs);
std::string beta_hist_csv(const SeedResult& seed);

// results.csv, epochs.csv, <run>/seed_<s>/beta_hist.csv (AdaptConf runs) and,
// when `summary` is given, summary.json. Overwrites existing files.
void emit_report(const std::vector<RunResult>& runs, const std::filesystem::path& out_dir,
                 const ExperimentResult* summary = nullptr);

nlohmann::json summary_json(const ExperimentResult& result);
ExperimentResult read_summary(const std::filesystem::path& path);

}  // namespace w2s
