#include "w2s/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "rng.hpp"
#include "w2s/checkpoint.hpp"
#include "w2s/errors.hpp"

namespace w2s {

BetaSummary BetaSummary::of(const BetaRecord& rec) {
  BetaSummary s;
  s.mean = rec.mean();
  s.frac_half = rec.frac_half();
  s.count = rec.values.size();
  s.histogram = rec.histogram();
  return s;
}

Aggregate aggregate(std::span<const double> values) {
  Aggregate a;
  if (values.empty()) return a;
  const double n = static_cast<double>(values.size());
  a.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.std = std::sqrt(ss / (n - 1.0));
  }
  return a;
}

Aggregate RunResult::top1() const {
  std::vector<double> v;
  for (const auto& s : seeds) v.push_back(s.top1);
  return aggregate(v);
}

std::optional<Aggregate> RunResult::top5() const {
  std::vector<double> v;
  for (const auto& s : seeds) {
    if (!s.top5) return std::nullopt;
    v.push_back(*s.top5);
  }
  if (v.empty()) return std::nullopt;
  return aggregate(v);
}

const RunResult* ExperimentResult::find(const std::string& role) const {
  for (const auto& r : runs)
    if (r.role == role) return &r;
  return nullptr;
}

double confidence_interval95(std::span<const double> accuracies) {
  if (accuracies.size() < 2) return 0.0;
  return 1.96 * aggregate(accuracies).std / std::sqrt(static_cast<double>(accuracies.size()));
}

namespace {

constexpr double kNormClamp = 1e-12;

// Rows of `x` scaled to unit length; norms below the clamp divide by the clamp.
std::vector<double> normalized_rows(const std::vector<double>& x, std::size_t rows, std::size_t dim,
                                    std::size_t* zero_norm) {
  std::vector<double> out(x);
  for (std::size_t r = 0; r < rows; ++r) {
    double norm = 0.0;
    for (std::size_t j = 0; j < dim; ++j) norm += x[r * dim + j] * x[r * dim + j];
    norm = std::sqrt(norm);
    if (norm < kNormClamp) {
      if (zero_norm) ++*zero_norm;
      norm = kNormClamp;
    }
    for (std::size_t j = 0; j < dim; ++j) out[r * dim + j] /= norm;
  }
  return out;
}

}  // namespace

double episode_accuracy(const Tensor<float>& support, std::span<const int> support_labels,
                        const Tensor<float>& query, std::span<const int> query_labels, std::size_t n_way,
                        std::size_t* zero_norm) {
  if (support.rank() != 2 || query.rank() != 2 || support.dim(1) != query.dim(1)) {
    throw ShapeError("episode embeddings must be [n, d] with matching d, got " + shape_str(support.shape()) +
                     " and " + shape_str(query.shape()));
  }
  if (support.dim(0) != support_labels.size() || query.dim(0) != query_labels.size()) {
    throw ShapeError("episode labels do not match embedding rows");
  }
  if (query_labels.empty()) throw ContractError("episode has no queries");
  const std::size_t d = support.dim(1);

  std::vector<double> centroids(n_way * d, 0.0);
  std::vector<std::size_t> counts(n_way, 0);
  auto s = support.data();
  for (std::size_t i = 0; i < support_labels.size(); ++i) {
    const int c = support_labels[i];
    if (c < 0 || static_cast<std::size_t>(c) >= n_way) throw ContractError("support label out of range");
    ++counts[static_cast<std::size_t>(c)];
    for (std::size_t j = 0; j < d; ++j) centroids[static_cast<std::size_t>(c) * d + j] += s[i * d + j];
  }
  for (std::size_t c = 0; c < n_way; ++c) {
    if (counts[c] == 0) throw ContractError("class " + std::to_string(c) + " has no support samples");
    for (std::size_t j = 0; j < d; ++j) centroids[c * d + j] /= static_cast<double>(counts[c]);
  }
  const auto cn = normalized_rows(centroids, n_way, d, zero_norm);
  const std::vector<double> qraw(query.data().begin(), query.data().end());
  const auto qn = normalized_rows(qraw, query_labels.size(), d, zero_norm);

  std::size_t correct = 0;
  for (std::size_t q = 0; q < query_labels.size(); ++q) {
    std::size_t best = 0;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < n_way; ++c) {
      double sim = 0.0;
      for (std::size_t j = 0; j < d; ++j) sim += qn[q * d + j] * cn[c * d + j];
      if (sim > best_sim) {
        best_sim = sim;
        best = c;
      }
    }
    if (static_cast<int>(best) == query_labels[q]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(query_labels.size());
}

FewShotScore nearest_centroid_eval(const EmbedFn& embed, const Dataset& ds, const EpisodeSpec& spec) {
  // Embed every sample once; episodes only index rows.
  std::vector<float> all;
  std::size_t dim = 0;
  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0; start < ds.size(); start += kChunk) {
    std::vector<std::size_t> idx(std::min(kChunk, ds.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const Tensor<float> e = embed(ds.gather(idx));
    if (e.rank() != 2 || e.dim(0) != idx.size()) throw ShapeError("embedding must return [n, d]");
    dim = e.dim(1);
    all.insert(all.end(), e.data().begin(), e.data().end());
  }
  auto rows = [&](const std::vector<std::size_t>& idx) {
    std::vector<float> out(idx.size() * dim);
    for (std::size_t i = 0; i < idx.size(); ++i)
      std::copy_n(all.begin() + static_cast<std::ptrdiff_t>(idx[i] * dim), dim,
                  out.begin() + static_cast<std::ptrdiff_t>(i * dim));
    return Tensor<float>({idx.size(), dim}, std::move(out));
  };

  FewShotScore score;
  score.accuracies.reserve(spec.episode_count);
  for (std::size_t e = 0; e < spec.episode_count; ++e) {
    const Episode ep = sample_episode(ds, spec, e);
    score.accuracies.push_back(episode_accuracy(rows(ep.support), ep.support_labels, rows(ep.query),
                                                ep.query_labels, spec.n_way, &score.zero_norm));
  }
  score.mean = aggregate(score.accuracies).mean;
  score.ci95 = confidence_interval95(score.accuracies);
  return score;
}

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  auto rng = detail::make_rng({seed, stream, 0x5EEDULL});
  return rng();
}

enum Stream : std::uint64_t { kTeacherInit = 1, kTeacherData, kTeacherShuffle, kStudentInit, kStudentShuffle };

EpochSummary summarize(const EpochLog& log) {
  EpochSummary e;
  e.epoch = log.epoch;
  e.lr = log.lr;
  e.train_loss = log.train_loss;
  if (log.eval) {
    e.top1 = 100.0 * log.eval->top(1);
    if (log.eval->topk.count(5)) e.top5 = 100.0 * log.eval->top(5);
    e.loss = log.eval->loss;
  }
  if (log.beta) e.beta = BetaSummary::of(*log.beta);
  return e;
}

BetaRecord beta_on(const Model<float>& student, const Model<float>& teacher, const Dataset& ds,
                   const LossConfig& loss) {
  BetaRecord rec;
  for (const auto& b : ordered_batches(ds, 512)) {
    const auto ts = TeacherSignal<float>::from_logits(teacher.forward(b.images));
    rec.merge(beta_stats(student.forward(b.images), ts, static_cast<float>(loss.temperature), loss.prob_clamp));
  }
  return rec;
}

Dataset concat(const std::vector<const Dataset*>& parts) {
  Dataset out;
  const Dataset& first = *parts.front();
  out.name = first.name;
  out.num_classes = first.num_classes;
  Shape shape{0};
  const Shape img = first.image_shape();
  shape.insert(shape.end(), img.begin(), img.end());
  std::vector<float> pixels;
  std::vector<int> coarse;
  bool has_coarse = true;
  for (const Dataset* p : parts) {
    if (p->size() == 0) continue;
    shape[0] += p->size();
    pixels.insert(pixels.end(), p->images.data().begin(), p->images.data().end());
    out.labels.insert(out.labels.end(), p->labels.begin(), p->labels.end());
    if (p->coarse_labels) coarse.insert(coarse.end(), p->coarse_labels->begin(), p->coarse_labels->end());
    else has_coarse = false;
  }
  out.images = Tensor<float>(std::move(shape), std::move(pixels));
  if (has_coarse) out.coarse_labels = std::move(coarse);
  return out;
}

struct Roles {
  RunResult teacher, student, scratch;
};

class Pipeline {
 public:
  explicit Pipeline(const ExperimentConfig& cfg) : cfg_(cfg) {}

  ExperimentResult run() {
    const auto start = std::chrono::steady_clock::now();
    setup();
    ExperimentResult result;
    result.config = cfg_;
    try {
      for (std::uint64_t seed : cfg_.seeds) run_seed(seed);
    } catch (const TrainingAborted&) {
      result.complete = false;
      finish(result, start);
      throw;
    }
    finish(result, start);
    return result;
  }

 private:
  bool has_teacher() const { return cfg_.kind != ExperimentKind::Scratch; }
  bool has_scratch() const {
    return cfg_.kind == ExperimentKind::Scratch || cfg_.kind == ExperimentKind::FewShot ||
           student_loss_.gt_weight > 0.0;
  }
  bool fewshot() const { return cfg_.kind == ExperimentKind::FewShot; }

  RunResult make_run(const std::string& role, Method method) const {
    RunResult r;
    r.run_id = cfg_.name + "-" + role;
    r.kind = cfg_.kind;
    r.method = method;
    r.role = role;
    r.split = fewshot() ? "novel" : "test";
    return r;
  }

  void setup() {
    PreparedData data = prepare_data(cfg_.dataset);
    weak_cfg_ = cfg_.weak;
    strong_cfg_ = cfg_.strong;
    if (fewshot()) {
      // Seeded class partition; models only see base classes.
      const std::size_t k = data.train.num_classes;
      auto rng = detail::make_rng({cfg_.dataset.split_seed, 0xC1A55ULL});
      const auto order = detail::permutation(k, rng);
      const auto n_base = static_cast<std::size_t>(std::floor(cfg_.dataset.class_split[0] * static_cast<double>(k)));
      const auto n_val = static_cast<std::size_t>(std::floor(cfg_.dataset.class_split[1] * static_cast<double>(k)));
      if (n_base < 2 || n_base + n_val >= k) throw ConfigError("class_split leaves no base or novel classes");
      std::vector<int> base, novel;
      for (std::size_t i = 0; i < k; ++i) {
        if (i < n_base) base.push_back(static_cast<int>(order[i]));
        else if (i >= n_base + n_val) novel.push_back(static_cast<int>(order[i]));
      }
      Dataset all = concat({&data.train, &data.val, &data.test});
      novel_ = split_classes(all, {novel})[0];
      train_ = split_classes(data.train, {base})[0];
      if (data.val.size() > 0) val_ = split_classes(data.val, {base})[0];
      weak_cfg_.num_classes = strong_cfg_.num_classes = base.size();
    } else {
      train_ = std::move(data.train);
      val_ = std::move(data.val);
      test_ = std::move(data.test);
      if (cfg_.kind == ExperimentKind::Noisy) train_ = inject_noise(train_, *cfg_.noise);
    }

    student_loss_ = cfg_.loss;
    if (cfg_.kind == ExperimentKind::W2sNoGt) student_loss_.gt_weight = 0.0;
    ce_loss_ = LossConfig{};
    ce_loss_.method = Method::CE;
    ce_loss_.gt_weight = 1.0;

    roles_.teacher = make_run("teacher", Method::CE);
    roles_.student = make_run("student", cfg_.loss.method);
    roles_.scratch = make_run("scratch", Method::CE);
  }

  TrainOptions options(const std::string& run_id, std::uint64_t seed) const {
    TrainOptions o;
    if (val_.size() > 0) o.eval_set = &val_;
    o.augment.enabled = cfg_.augment;
    o.abort_checkpoint = (seed_dir(run_id, seed) / "aborted.w2sc").string();
    std::filesystem::create_directories(seed_dir(run_id, seed));
    return o;
  }

  std::filesystem::path seed_dir(const std::string& run_id, std::uint64_t seed) const {
    return std::filesystem::path(cfg_.out_dir) / run_id / ("seed_" + std::to_string(seed));
  }

  SeedResult finalize(std::uint64_t seed, const Model<float>& model, const TrainLog& log, const OptimConfig& optim,
                      const std::string& run_id, const Model<float>* teacher, const LossConfig* loss) const {
    SeedResult r;
    r.seed = seed;
    r.final_epoch = optim.epochs;
    for (const auto& e : log.epochs) r.epochs.push_back(summarize(e));
    if (fewshot()) {
      const auto score = nearest_centroid_eval(
          [&](const Tensor<float>& x) { return model.features(x); }, novel_, *cfg_.episodes);
      r.top1 = 100.0 * score.mean;
      r.ci95 = 100.0 * score.ci95;
    } else {
      const Metrics m = evaluate(model, test_, {1, 5});
      r.top1 = 100.0 * m.top(1);
      r.top5 = 100.0 * m.top(5);
      r.loss = m.loss;
      if (teacher && loss && loss->method == Method::AdaptConf) r.beta = BetaSummary::of(beta_on(model, *teacher, test_, *loss));
    }
    if (cfg_.save_checkpoints) {
      save_checkpoint(model, nullptr, &optim, optim.epochs, "seed=" + std::to_string(seed),
                      seed_dir(run_id, seed) / "final.w2sc");
    }
    return r;
  }

  void run_seed(std::uint64_t seed) {
    const OptimConfig& t_optim = cfg_.teacher_optim ? *cfg_.teacher_optim : cfg_.optim;
    std::optional<Model<float>> teacher;
    if (has_teacher()) {
      std::vector<std::size_t> idx;
      if (cfg_.teacher_fraction < 1.0) {
        auto rng = detail::make_rng({seed, kTeacherData});
        idx = detail::permutation(train_.size(), rng);
        idx.resize(std::max<std::size_t>(1, static_cast<std::size_t>(cfg_.teacher_fraction *
                                                                    static_cast<double>(train_.size()))));
        std::sort(idx.begin(), idx.end());
      }
      const Dataset subset = idx.empty() ? train_ : train_.subset(idx);
      teacher = Model<float>::build(weak_cfg_, derive_seed(seed, kTeacherInit));
      const TrainLog log = train(*teacher, subset, ce_loss_, t_optim, static_cast<const Model<float>*>(nullptr),
                                 derive_seed(seed, kTeacherShuffle), options(roles_.teacher.run_id, seed));
      roles_.teacher.seeds.push_back(finalize(seed, *teacher, log, t_optim, roles_.teacher.run_id, nullptr, nullptr));

      Model<float> student = Model<float>::build(strong_cfg_, derive_seed(seed, kStudentInit));
      TrainOptions o = options(roles_.student.run_id, seed);
      o.warmup_epochs = cfg_.warmup_epochs;
      const TrainLog slog = train(student, train_, student_loss_, cfg_.optim, &*teacher,
                                  derive_seed(seed, kStudentShuffle), o);
      roles_.student.seeds.push_back(
          finalize(seed, student, slog, cfg_.optim, roles_.student.run_id, &*teacher, &student_loss_));
    }
    if (has_scratch()) {
      // Same initialization and shuffle as the student, so Δ is a paired comparison.
      Model<float> scratch = Model<float>::build(strong_cfg_, derive_seed(seed, kStudentInit));
      const TrainLog log = train(scratch, train_, ce_loss_, cfg_.optim, static_cast<const Model<float>*>(nullptr),
                                 derive_seed(seed, kStudentShuffle), options(roles_.scratch.run_id, seed));
      roles_.scratch.seeds.push_back(finalize(seed, scratch, log, cfg_.optim, roles_.scratch.run_id, nullptr, nullptr));
    }
  }

  void finish(ExperimentResult& result, std::chrono::steady_clock::time_point start) {
    if (has_teacher()) {
      RunResult student = roles_.student;
      const bool vs_scratch = student_loss_.gt_weight > 0.0 && has_scratch();
      const RunResult& ref = vs_scratch ? roles_.scratch : roles_.teacher;
      student.reference = ref.run_id;
      if (!student.seeds.empty() && ref.seeds.size() == student.seeds.size()) {
        student.delta = student.top1().mean - ref.top1().mean;
      }
      result.runs.push_back(std::move(student));
      result.runs.push_back(roles_.teacher);
      if (has_scratch()) result.runs.push_back(roles_.scratch);
    } else {
      result.runs.push_back(roles_.scratch);
    }
    result.wall_clock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    emit_report(result.runs, cfg_.out_dir, &result);
  }

  const ExperimentConfig& cfg_;
  ModelConfig weak_cfg_, strong_cfg_;
  Dataset train_, val_, test_, novel_;
  LossConfig student_loss_, ce_loss_;
  Roles roles_;
};

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  return Pipeline(cfg).run();
}

}  // namespace w2s
