#include "w2s/training.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>
#include <type_traits>

#include "w2s/checkpoint.hpp"
#include "w2s/errors.hpp"
#include "w2s/ops.hpp"

namespace w2s {

std::string to_string(Schedule schedule) {
  switch (schedule) {
    case Schedule::Cosine: return "cosine";
    case Schedule::Step: return "step";
    case Schedule::Constant: return "constant";
  }
  return "?";
}

Schedule schedule_from_string(const std::string& name) {
  if (name == "cosine") return Schedule::Cosine;
  if (name == "step") return Schedule::Step;
  if (name == "constant") return Schedule::Constant;
  throw ConfigError("unknown schedule '" + name + "'");
}

void OptimConfig::validate() const {
  if (!(lr_min >= 0.0 && lr_max >= lr_min)) throw ConfigError("need lr_max >= lr_min >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0,1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (epochs == 0) throw ConfigError("epochs must be at least 1");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (schedule == Schedule::Step && (step_size == 0 || !(gamma > 0.0))) {
    throw ConfigError("step schedule needs step_size >= 1 and gamma > 0");
  }
}

OptimConfig OptimConfig::cifar_recipe() {
  OptimConfig c;
  c.lr_max = 0.2;
  c.lr_min = 2e-3;
  c.momentum = 0.9;
  c.weight_decay = 5e-4;
  c.schedule = Schedule::Cosine;
  c.epochs = 240;
  c.batch_size = 512;
  return c;
}

OptimConfig OptimConfig::imagenet_recipe() {
  OptimConfig c;
  c.lr_max = 0.1;
  c.lr_min = 0.0;
  c.momentum = 0.9;
  c.weight_decay = 1e-4;
  c.schedule = Schedule::Step;
  c.step_size = 30;
  c.gamma = 0.1;
  c.epochs = 100;
  c.batch_size = 512;
  return c;
}

void to_json(nlohmann::json& j, const OptimConfig& cfg) {
  j = nlohmann::json{{"lr_max", cfg.lr_max},         {"lr_min", cfg.lr_min},
                     {"momentum", cfg.momentum},     {"weight_decay", cfg.weight_decay},
                     {"schedule", to_string(cfg.schedule)},
                     {"step_size", cfg.step_size},   {"gamma", cfg.gamma},
                     {"epochs", cfg.epochs},         {"batch_size", cfg.batch_size}};
}

void from_json(const nlohmann::json& j, OptimConfig& cfg) {
  cfg = OptimConfig{};
  if (j.contains("preset")) {
    const auto preset = j.at("preset").get<std::string>();
    if (preset == "cifar") cfg = OptimConfig::cifar_recipe();
    else if (preset == "imagenet") cfg = OptimConfig::imagenet_recipe();
    else if (preset != "desk") throw ConfigError("unknown optimizer preset '" + preset + "'");
  }
  cfg.lr_max = j.value("lr_max", cfg.lr_max);
  cfg.lr_min = j.value("lr_min", cfg.lr_min);
  cfg.momentum = j.value("momentum", cfg.momentum);
  cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
  if (j.contains("schedule")) cfg.schedule = schedule_from_string(j.at("schedule").get<std::string>());
  cfg.step_size = j.value("step_size", cfg.step_size);
  cfg.gamma = j.value("gamma", cfg.gamma);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
}

double lr_at(const OptimConfig& cfg, std::size_t epoch) {
  switch (cfg.schedule) {
    case Schedule::Constant:
      return cfg.lr_max;
    case Schedule::Step:
      return cfg.lr_max * std::pow(cfg.gamma, static_cast<double>(epoch / cfg.step_size));
    case Schedule::Cosine: {
      if (cfg.epochs <= 1) return cfg.lr_max;
      const double t = static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1);
      return cfg.lr_min + (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(std::numbers::pi * t)) / 2.0;
    }
  }
  return cfg.lr_max;
}

template <typename Real>
void sgd_step(std::span<NamedParameter<Real>> params, SgdState<Real>& state, const OptimConfig& cfg,
              double lr) {
  for (const auto& p : params) {
    if (!p.value.has_grad()) continue;
    if (p.value.grad().size() != p.value.size()) {
      throw ShapeError("gradient of '" + p.name + "' does not match its parameter");
    }
    for (Real g : p.value.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter '" + p.name + "'");
    }
  }
  state.velocity.resize(params.size());
  const Real mu = static_cast<Real>(cfg.momentum);
  const Real wd = static_cast<Real>(cfg.weight_decay);
  const Real step = static_cast<Real>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& t = params[i].value;
    if (!t.has_grad()) continue;
    auto w = t.data();
    auto g = t.grad();
    auto& v = state.velocity[i];
    if (v.size() != w.size()) v.assign(w.size(), Real(0));
    for (std::size_t j = 0; j < w.size(); ++j) {
      const Real gd = g[j] + wd * w[j];
      v[j] = mu * v[j] + gd;
      w[j] -= step * v[j];
    }
  }
}

namespace {

template <typename Real>
bool top_k_impl(std::span<const Real> logits, int label, std::size_t k) {
  const auto y = static_cast<std::size_t>(label);
  std::size_t rank = 0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (logits[j] > logits[y] || (logits[j] == logits[y] && j < y)) ++rank;
  }
  return rank < k;
}

}  // namespace

bool in_top_k(std::span<const float> logits, int label, std::size_t k) {
  return top_k_impl(logits, label, k);
}
bool in_top_k(std::span<const double> logits, int label, std::size_t k) {
  return top_k_impl(logits, label, k);
}

template <typename Real>
Tensor<Real> to_real(const Tensor<float>& images) {
  if constexpr (std::is_same_v<Real, float>) {
    return images;
  } else {
    auto d = images.data();
    return Tensor<Real>(images.shape(), std::vector<Real>(d.begin(), d.end()));
  }
}

template <typename Real>
Metrics evaluate(const Model<Real>& model, const Dataset& ds, const std::vector<std::size_t>& topk,
                 std::size_t batch_size) {
  Metrics m;
  std::map<std::size_t, std::size_t> hits;
  for (auto k : topk) hits[k] = 0;
  double loss = 0.0;
  const std::size_t classes = model.config().num_classes;
  for (const auto& b : ordered_batches(ds, batch_size)) {
    const Tensor<Real> logits = model.forward(to_real<Real>(b.images));
    auto z = logits.data();
    const Tensor<Real> logp = ops::log_softmax(logits);
    auto lp = logp.data();
    for (std::size_t r = 0; r < b.labels.size(); ++r) {
      auto row = z.subspan(r * classes, classes);
      for (auto& [k, h] : hits)
        if (in_top_k(std::span<const Real>(row), b.labels[r], k)) ++h;
      loss -= static_cast<double>(lp[r * classes + static_cast<std::size_t>(b.labels[r])]);
    }
  }
  m.count = ds.size();
  for (const auto& [k, h] : hits) m.topk[k] = static_cast<double>(h) / static_cast<double>(m.count);
  m.loss = loss / static_cast<double>(m.count);
  return m;
}

template <typename Real>
TeacherSignal<Real> teacher_signal(const Model<Real>& teacher, const Dataset& ds, std::size_t batch_size) {
  std::vector<Real> logits;
  logits.reserve(ds.size() * teacher.config().num_classes);
  for (const auto& b : ordered_batches(ds, batch_size)) {
    const auto z = teacher.forward(to_real<Real>(b.images));
    logits.insert(logits.end(), z.data().begin(), z.data().end());
  }
  const std::size_t k = teacher.config().num_classes;
  return TeacherSignal<Real>::from_logits(Tensor<Real>({logits.size() / k, k}, std::move(logits)));
}

namespace {

template <typename Real>
void maybe_checkpoint(const Model<Real>& model, const SgdState<Real>& state, const OptimConfig& optim,
                      std::size_t epoch, std::uint64_t seed, const std::string& path) {
  if (path.empty()) return;
  if constexpr (std::is_same_v<Real, float>) {
    save_checkpoint(model, &state, &optim, epoch, "mt19937_64 seed=" + std::to_string(seed), path);
  }
}

template <typename Real>
double objective_value(const Model<Real>& model, const Dataset& ds, const LossConfig& loss,
                       const Model<Real>* teacher) {
  double total = 0.0;
  for (const auto& b : ordered_batches(ds, 512)) {
    const Tensor<Real> x = to_real<Real>(b.images);
    const Tensor<Real> logits = model.forward(x);
    std::optional<TeacherSignal<Real>> ts;
    if (teacher) ts = TeacherSignal<Real>::from_logits(teacher->forward(x));
    std::optional<std::span<const int>> labels;
    if (loss.gt_weight > 0.0) labels = std::span<const int>(b.labels);
    const Tensor<Real> obj = total_objective(logits, ts ? &*ts : nullptr, labels, loss);
    total += static_cast<double>(obj.item()) * static_cast<double>(b.labels.size());
  }
  return total / static_cast<double>(ds.size());
}

}  // namespace

template <typename Real>
TrainLog train(Model<Real>& model, const Dataset& train_set, const LossConfig& loss,
               const OptimConfig& optim, const Model<Real>* teacher, std::uint64_t seed,
               const TrainOptions& options) {
  loss.validate();
  optim.validate();
  train_set.validate();
  if ((loss.method != Method::CE) != (teacher != nullptr)) {
    throw ConfigError(loss.method == Method::CE ? "CE training takes no teacher"
                                                : to_string(loss.method) + " training needs a teacher");
  }
  if (loss.gt_weight == 0.0 && loss.method == Method::CE) {
    throw ConfigError("CE training with gt_weight 0 has no objective");
  }

  LossConfig warmup = loss;
  warmup.method = Method::CE;
  warmup.gt_weight = 1.0;
  warmup.distill_weight = 0.0;

  TrainLog log;
  log.initial_train_loss = objective_value(model, train_set, loss, teacher);
  SgdState<Real> state;

  for (std::size_t epoch = 0; epoch < optim.epochs; ++epoch) {
    const double lr = lr_at(optim, epoch);
    const bool distill = epoch >= options.warmup_epochs;
    const LossConfig& cfg = distill ? loss : warmup;
    double loss_sum = 0.0;

    for (const auto& b : make_batches(train_set, optim.batch_size, seed, epoch, options.augment)) {
      const Tensor<Real> x = to_real<Real>(b.images);
      std::optional<TeacherSignal<Real>> ts;
      if (teacher && distill) ts = TeacherSignal<Real>::from_logits(teacher->forward(x));
      std::optional<std::span<const int>> labels;
      if (cfg.gt_weight > 0.0) labels = std::span<const int>(b.labels);

      Tape<Real> tape;
      model.zero_grad();
      Tensor<Real> obj;
      try {
        obj = total_objective(model.forward(x, &tape), ts ? &*ts : nullptr, labels, cfg, &tape);
      } catch (const NumericError& e) {
        // Diverged weights produce non-finite logits before the loss is formed.
        maybe_checkpoint(model, state, optim, epoch, seed, options.abort_checkpoint);
        throw TrainingAborted(e.what(), options.abort_checkpoint);
      }
      const double value = static_cast<double>(obj.item());
      if (!std::isfinite(value)) {
        maybe_checkpoint(model, state, optim, epoch, seed, options.abort_checkpoint);
        throw TrainingAborted("non-finite loss at epoch " + std::to_string(epoch),
                              options.abort_checkpoint);
      }
      tape.backward(obj);
      try {
        sgd_step(std::span<NamedParameter<Real>>(model.params()), state, optim, lr);
      } catch (const NumericError& e) {
        maybe_checkpoint(model, state, optim, epoch, seed, options.abort_checkpoint);
        throw TrainingAborted(e.what(), options.abort_checkpoint);
      }
      loss_sum += value * static_cast<double>(b.labels.size());
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = lr;
    entry.train_loss = loss_sum / static_cast<double>(train_set.size());
    if (options.eval_set) {
      try {
        entry.eval = evaluate(model, *options.eval_set, options.topk);
        if (loss.method == Method::AdaptConf && teacher) {
          BetaRecord rec;
          rec.epoch = epoch;
          for (const auto& b : ordered_batches(*options.eval_set, 512)) {
            const Tensor<Real> x = to_real<Real>(b.images);
            const auto ts = TeacherSignal<Real>::from_logits(teacher->forward(x));
            rec.merge(beta_stats(model.forward(x), ts, static_cast<Real>(loss.temperature), loss.prob_clamp));
          }
          entry.beta = std::move(rec);
        }
      } catch (const NumericError& e) {
        maybe_checkpoint(model, state, optim, epoch + 1, seed, options.abort_checkpoint);
        throw TrainingAborted(e.what(), options.abort_checkpoint);
      }
    }
    log.epochs.push_back(std::move(entry));

    if (!options.checkpoint_dir.empty() && options.checkpoint_every > 0 &&
        (epoch + 1) % options.checkpoint_every == 0) {
      std::filesystem::create_directories(options.checkpoint_dir);
      maybe_checkpoint(model, state, optim, epoch + 1, seed,
                       (std::filesystem::path(options.checkpoint_dir) /
                        ("epoch_" + std::to_string(epoch + 1) + ".w2sc"))
                           .string());
    }
  }
  model.zero_grad();
  return log;
}

#define W2S_INSTANTIATE_TRAINING(Real)                                                            \
  template void sgd_step(std::span<NamedParameter<Real>>, SgdState<Real>&, const OptimConfig&,    \
                         double);                                                                 \
  template Tensor<Real> to_real(const Tensor<float>&);                                            \
  template Metrics evaluate(const Model<Real>&, const Dataset&, const std::vector<std::size_t>&,  \
                            std::size_t);                                                         \
  template TeacherSignal<Real> teacher_signal(const Model<Real>&, const Dataset&, std::size_t);   \
  template TrainLog train(Model<Real>&, const Dataset&, const LossConfig&, const OptimConfig&,    \
                          const Model<Real>*, std::uint64_t, const TrainOptions&);

W2S_INSTANTIATE_TRAINING(float)
W2S_INSTANTIATE_TRAINING(double)

#undef W2S_INSTANTIATE_TRAINING

}  // namespace w2s
