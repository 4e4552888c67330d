#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "w2s/data.hpp"
#include "w2s/losses.hpp"
#include "w2s/models.hpp"

namespace w2s {

enum class Schedule { Cosine, Step, Constant };

std::string to_string(Schedule schedule);
Schedule schedule_from_string(const std::string& name);

struct OptimConfig {
  double lr_max = 0.05;
  double lr_min = 5e-4;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  Schedule schedule = Schedule::Cosine;
  std::size_t step_size = 30;  // Step only
  double gamma = 0.1;          // Step only
  std::size_t epochs = 30;
  std::size_t batch_size = 128;

  void validate() const;
  bool operator==(const OptimConfig&) const = default;

  // Full-length recipes: 240-epoch cosine from 0.2 to 2e-3, batch 512,
  // wd 5e-4; and the 100-epoch step schedule (0.1, x0.1 every 30), wd 1e-4.
  static OptimConfig cifar_recipe();
  static OptimConfig imagenet_recipe();
};

void to_json(nlohmann::json& j, const OptimConfig& cfg);
void from_json(const nlohmann::json& j, OptimConfig& cfg);

// Learning rate for 0-based `epoch`. Cosine reaches lr_min at epochs - 1.
double lr_at(const OptimConfig& cfg, std::size_t epoch);

template <typename Real>
struct SgdState {
  std::vector<std::vector<Real>> velocity;  // one buffer per parameter, lazily sized
};

/**
 * Classic momentum SGD with weight decay folded into the gradient:
 *   g' = g + wd * w;  v = momentum * v + g';  w = w - lr * v
 * Throws NumericError naming the parameter on a non-finite gradient, before
 * any parameter is modified.
 */
template <typename Real>
void sgd_step(std::span<NamedParameter<Real>> params, SgdState<Real>& state, const OptimConfig& cfg,
              double lr);

struct Metrics {
  std::map<std::size_t, double> topk;  // k -> accuracy
  double loss = 0.0;                   // mean CE at T = 1
  std::size_t count = 0;

  double top(std::size_t k) const { return topk.at(k); }
};

// True label among the k largest logits; ties rank the lower class index first.
bool in_top_k(std::span<const float> logits, int label, std::size_t k);
bool in_top_k(std::span<const double> logits, int label, std::size_t k);

template <typename Real>
Metrics evaluate(const Model<Real>& model, const Dataset& ds, const std::vector<std::size_t>& topk = {1, 5},
                 std::size_t batch_size = 512);

// Teacher logits for a whole dataset in index order, wrapped as a TeacherSignal.
template <typename Real>
TeacherSignal<Real> teacher_signal(const Model<Real>& teacher, const Dataset& ds,
                                   std::size_t batch_size = 512);

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::optional<Metrics> eval;
  std::optional<BetaRecord> beta;  // AdaptConf runs with an eval set
};

struct TrainOptions {
  const Dataset* eval_set = nullptr;
  std::vector<std::size_t> topk{1, 5};
  AugmentSpec augment;
  // Leading epochs trained with plain CE on the dataset labels before the
  // distillation objective switches on.
  std::size_t warmup_epochs = 0;
  // Written when training aborts on a non-finite loss (float models only).
  std::string abort_checkpoint;
  // Periodic checkpoints epoch_<e>.w2sc in this directory when non-empty.
  std::string checkpoint_dir;
  std::size_t checkpoint_every = 0;
};

struct TrainLog {
  double initial_train_loss = 0.0;
  std::vector<EpochLog> epochs;
};

/**
 * Trains `model` in place. Per epoch: seeded batches -> teacher forward on the
 * same (augmented) inputs -> TeacherSignal -> total_objective -> backward ->
 * sgd_step. Teacher is required exactly when loss.method != CE and is never
 * modified.
 */
template <typename Real>
TrainLog train(Model<Real>& model, const Dataset& train_set, const LossConfig& loss,
               const OptimConfig& optim, const Model<Real>* teacher, std::uint64_t seed,
               const TrainOptions& options = {});

template <typename Real>
Tensor<Real> to_real(const Tensor<float>& images);

}  // namespace w2s
