// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.
//
// Usage: w2s_acceptance [--only N[,N...]] [--out DIR]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "oracle.hpp"
#include "w2s/checkpoint.hpp"
#include "w2s/errors.hpp"
#include "w2s/grad_check.hpp"
#include "w2s/harness.hpp"
#include "w2s/ops.hpp"

using namespace w2s;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

double rel_err(double a, double b) {
  const double d = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / d;
}

std::vector<double> normals(std::mt19937_64& rng, std::size_t n, double scale) {
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

std::vector<oracle::Row> rows_of(const std::vector<double>& flat, std::size_t k) {
  std::vector<oracle::Row> out;
  for (std::size_t i = 0; i < flat.size(); i += k)
    out.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(i), flat.begin() + static_cast<std::ptrdiff_t>(i + k));
  return out;
}

template <typename A, typename B>
bool same_bits(A a, B b) {
  static_assert(sizeof(A) == sizeof(B));
  return std::memcmp(&a, &b, sizeof a) == 0;
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::uint8_t> slurp_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// 1. Tape gradients of the full objective against central differences.
Outcome gradients() {
  const auto t0 = Clock::now();
  ModelConfig mc;
  mc.input_shape = {1, 1, 6};
  mc.num_classes = 5;
  mc.hidden = {8};
  auto model = Model<double>::build(mc, 3);
  std::mt19937_64 rng(101);
  const Tensor<double> x({4, 1, 1, 6}, normals(rng, 24, 1.0));
  const std::vector<int> gt{1, 4, 0, 2};
  const auto ts = TeacherSignal<double>::from_logits(Tensor<double>({4, 5}, normals(rng, 20, 2.0)));
  std::vector<Tensor<double>> params;
  for (auto& p : model.params()) {
    p.value.set_requires_grad(true);
    params.push_back(p.value);
  }
  double worst = 0.0;
  std::string where;
  for (Method m : {Method::CE, Method::KD, Method::AugConf, Method::AdaptConf}) {
    for (double temp : {1.0, 2.0}) {
      for (double gt_w : {0.0, 1.0}) {
        if (m == Method::CE && gt_w == 0.0) continue;
        LossConfig c;
        c.method = m;
        c.alpha = 0.3;
        c.temperature = temp;
        c.gt_weight = gt_w;
        // Detached beta is held at the base point.
        std::vector<double> pinned;
        if (m == Method::AdaptConf) pinned = beta_weights(softmax_T(model.forward(x), temp), ts.hard);
        const double err = grad_check(
            [&](Tape<double>& tape) {
              const auto logits = model.forward(x, &tape);
              if (m != Method::AdaptConf) {
                return total_objective(logits, m == Method::CE ? nullptr : &ts, std::span<const int>(gt), c, &tape);
              }
              auto loss = adaptconf_loss(logits, ts, c, &tape, std::optional<std::span<const double>>(pinned));
              if (gt_w > 0.0) loss = ops::add(total_objective<double>(logits, nullptr, std::span<const int>(gt), c, &tape), loss, &tape);
              return loss;
            },
            params);
        if (err > worst) {
          worst = err;
          where = to_string(m) + " T=" + fmt(temp) + " gt=" + fmt(gt_w);
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-5 && secs < 10.0,
          "max rel err " + fmt(worst, 3) + " (" + where + "), " + fmt(secs, 3) + " s"};
}

// 2. beta bounds, the agreement case and the exp/CE form.
Outcome beta_invariants() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<std::size_t> kdist(2, 12);
  std::uniform_real_distribution<double> scale(0.1, 12.0);
  std::size_t out_of_range = 0, half_mismatch = 0, form_mismatch = 0, agreements = 0;
  double worst = 0.0;
  const std::size_t n = 100000;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = kdist(rng);
    const auto z = normals(rng, k, scale(rng));
    const auto p = oracle::softmax(z, 1.0);
    const int w = static_cast<int>(std::uniform_int_distribution<std::size_t>(0, k - 1)(rng));
    const double b = beta_weight(std::span<const double>(p), w);
    if (!(b > 0.0 && b <= 0.5)) ++out_of_range;
    const bool agree = argmax(std::span<const double>(p)) == w;
    agreements += agree;
    if ((b == 0.5) != agree) ++half_mismatch;
    const double e = rel_err(b, oracle::beta(p, w));
    worst = std::max(worst, e);
    if (e > 1e-6) ++form_mismatch;
  }
  const double secs = seconds_since(t0);
  return {out_of_range == 0 && half_mismatch == 0 && form_mismatch == 0 && secs < 5.0,
          std::to_string(n) + " pairs (" + std::to_string(agreements) + " agreeing), out of range " +
              std::to_string(out_of_range) + ", 0.5 mismatches " + std::to_string(half_mismatch) +
              ", max rel err vs exp/CE " + fmt(worst, 3) + ", " + fmt(secs, 3) + " s"};
}

// 3. Batched losses against the straight-line oracle.
Outcome oracle_equivalence() {
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<std::size_t> ndist(1, 8), kdist(2, 10);
  std::uniform_real_distribution<double> tdist(0.5, 5.0), adist(0.0, 1.0), sdist(0.5, 6.0);
  double worst = 0.0;
  std::size_t bad = 0;
  const std::size_t cases = 1000;
  for (std::size_t c = 0; c < cases; ++c) {
    const std::size_t n = ndist(rng), k = kdist(rng);
    const double temp = tdist(rng), alpha = adist(rng);
    const auto sv = normals(rng, n * k, sdist(rng)), tv = normals(rng, n * k, sdist(rng));
    const auto s = rows_of(sv, k), t = rows_of(tv, k);
    const Tensor<double> st({n, k}, sv);
    const auto ts = TeacherSignal<double>::from_logits(Tensor<double>({n, k}, tv));
    LossConfig cfg;
    cfg.temperature = temp;
    cfg.alpha = alpha;
    const double errs[] = {
        rel_err(augconf_loss(st, ts, cfg).item(), oracle::augconf(s, t, alpha, temp)),
        rel_err(adaptconf_loss(st, ts, cfg).item(), oracle::adaptconf(s, t, temp)),
    };
    for (double e : errs) {
      worst = std::max(worst, e);
      bad += e > 1e-6;
    }
  }
  return {bad == 0, std::to_string(cases) + " cases x {AugConf, AdaptConf}, max rel err " + fmt(worst, 3)};
}

// 4. Reductions that must hold bit for bit.
template <typename Real>
std::size_t reduction_failures(std::mt19937_64& rng, std::size_t cases) {
  std::size_t bad = 0;
  for (std::size_t c = 0; c < cases; ++c) {
    const std::size_t n = 1 + c % 7, k = 2 + c % 9;
    const auto sv = normals(rng, n * k, 3.0), tv = normals(rng, n * k, 3.0);
    const Tensor<Real> s({n, k}, std::vector<Real>(sv.begin(), sv.end()));
    const auto ts = TeacherSignal<Real>::from_logits(Tensor<Real>({n, k}, std::vector<Real>(tv.begin(), tv.end())));
    LossConfig cfg;
    cfg.temperature = 0.5 + static_cast<double>(c % 4);
    cfg.alpha = 0.0;
    bad += !same_bits(augconf_loss(s, ts, cfg).item(), soft_target_loss(s, ts, cfg).item());
    cfg.alpha = 1.0;
    bad += !same_bits(augconf_loss(s, ts, cfg).item(), self_label_loss(s, cfg).item());
    for (double a : {0.0, 0.2, 0.5, 0.75, 1.0}) {
      cfg.alpha = a;
      const std::vector<Real> pinned(n, static_cast<Real>(a));
      bad += !same_bits(adaptconf_loss<Real>(s, ts, cfg, nullptr, std::optional<std::span<const Real>>(pinned)).item(),
                        augconf_loss(s, ts, cfg).item());
    }
  }
  return bad;
}

Outcome reductions() {
  std::mt19937_64 rng(404);
  const std::size_t bad = reduction_failures<double>(rng, 300) + reduction_failures<float>(rng, 300);
  return {bad == 0, "600 cases (double and float) x 7 identities, " + std::to_string(bad) + " not bitwise equal"};
}

// 5-7. Weak-to-strong runs.
struct W2sRuns {
  std::optional<ExperimentResult> nogt, gt;
  double nogt_secs = 0.0, gt_secs = 0.0;
  std::string nogt_config, error;
};

ExperimentConfig recipe(const fs::path& path, const fs::path& out) {
  auto cfg = load_experiment_config(path);
  cfg.out_dir = (out / cfg.name).string();
  cfg.save_checkpoints = false;
  return cfg;
}

bool have_mnist() {
  const char* dir = std::getenv("W2S_DATA_DIR");
  return dir && fs::exists(fs::path(dir) / "train-images-idx3-ubyte") &&
         fs::exists(fs::path(dir) / "t10k-images-idx3-ubyte");
}

W2sRuns run_w2s(const fs::path& out, bool need_nogt, bool need_gt) {
  W2sRuns r;
  const fs::path configs = W2S_CONFIG_DIR;
  const bool mnist = have_mnist();
  r.nogt_config = mnist ? "mnist_nogt.json" : "synth_nogt.json";
  try {
    if (need_nogt) {
      const auto t0 = Clock::now();
      r.nogt = run_experiment(recipe(configs / r.nogt_config, out));
      r.nogt_secs = seconds_since(t0);
    }
    if (need_gt) {
      const auto t0 = Clock::now();
      r.gt = run_experiment(recipe(configs / (mnist ? "mnist_gt.json" : "synth_gt.json"), out));
      r.gt_secs = seconds_since(t0);
    }
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  return r;
}

Outcome no_gt_gain(const W2sRuns& r) {
  if (!r.nogt) return {false, "run failed: " + r.error};
  const auto& student = r.nogt->primary();
  const auto* teacher = r.nogt->find("teacher");
  if (!teacher || !student.delta) return {false, "missing teacher or delta"};
  const double delta = student.top1().mean - teacher->top1().mean;
  return {delta >= 1.0 && r.nogt_secs <= 1200.0,
          r.nogt_config + ": student " + fmt(student.top1().mean) + " vs teacher " + fmt(teacher->top1().mean) +
              " (delta " + fmt(delta, 3) + " points, " + std::to_string(student.seeds.size()) + " seeds), " +
              fmt(r.nogt_secs, 3) + " s"};
}

Outcome gt_non_inferior(const W2sRuns& r) {
  if (!r.gt) return {false, "run failed: " + r.error};
  const auto* scratch = r.gt->find("scratch");
  if (!scratch) return {false, "no scratch run"};
  const double s = r.gt->primary().top1().mean, base = scratch->top1().mean;
  return {s >= base - 0.2, "student " + fmt(s) + " vs scratch " + fmt(base) + " (delta " + fmt(s - base, 3) + " points), " +
                               fmt(r.gt_secs, 3) + " s"};
}

Outcome beta_dynamics(const W2sRuns& r) {
  if (!r.nogt) return {false, "run failed: " + r.error};
  bool ok = true;
  std::string detail;
  for (const auto& s : r.nogt->primary().seeds) {
    if (s.epochs.empty() || !s.epochs.front().beta || !s.epochs.back().beta) return {false, "no validation beta record"};
    const double first = s.epochs.front().beta->frac_half, last = s.epochs.back().beta->frac_half;
    ok = ok && last > first;
    detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(s.seed) + ": " + fmt(first, 3) +
              " -> " + fmt(last, 3);
  }
  return {ok, "val fraction at 0.5, epoch 1 -> final: " + detail};
}

// 8. Label-noise counts and constraints.
Outcome noise_machinery() {
  const auto t0 = Clock::now();
  std::vector<std::string> problems;
  Dataset ds;
  ds.name = "noise";
  const std::size_t n = 50000, k = 10;
  ds.images = Tensor<float>::zeros({n, 1, 1, 1});
  std::mt19937_64 rng(808);
  for (std::size_t i = 0; i < n; ++i) ds.labels.push_back(static_cast<int>(rng() % k));
  ds.num_classes = k;
  for (double r : {0.2, 0.4}) {
    NoiseSpec spec;
    spec.ratio = r;
    spec.seed = 17;
    NoiseReport rep;
    const auto out = inject_noise(ds, spec, &rep);
    std::size_t changed = 0, kept = 0;
    for (std::size_t i = 0; i < n; ++i) changed += out.labels[i] != ds.labels[i];
    for (const auto& f : rep.flips) kept += f.old_label == f.new_label;
    const auto want = static_cast<std::size_t>(std::floor(r * static_cast<double>(n) + 1e-9));
    if (changed != want || rep.flips.size() != want || kept != 0) {
      problems.push_back("symmetric r=" + fmt(r) + ": " + std::to_string(changed) + " changed, want " + std::to_string(want));
    }
  }
  // Synthetic coarse-labelled fixture: 100 fine classes in 20 super-classes of 5.
  Dataset fine;
  fine.name = "coarse";
  fine.images = Tensor<float>::zeros({10000, 1, 1, 1});
  std::vector<int> coarse;
  for (int i = 0; i < 10000; ++i) {
    fine.labels.push_back(i % 100);
    coarse.push_back((i % 100) / 5);
  }
  fine.coarse_labels = coarse;
  fine.num_classes = 100;
  for (double r : {0.2, 0.4}) {
    NoiseSpec spec;
    spec.kind = NoiseKind::Asymmetric;
    spec.ratio = r;
    NoiseReport rep;
    const auto out = inject_noise(fine, spec, &rep);
    std::size_t escaped = 0, changed = 0;
    for (std::size_t i = 0; i < fine.size(); ++i) {
      changed += out.labels[i] != fine.labels[i];
      escaped += out.labels[i] / 5 != coarse[i];
    }
    const auto want = static_cast<std::size_t>(std::floor(r * 10000.0 + 1e-9));
    if (escaped != 0 || changed != want) {
      problems.push_back("circular r=" + fmt(r) + ": " + std::to_string(changed) + " changed, " + std::to_string(escaped) +
                         " left their super-class");
    }
  }
  const double secs = seconds_since(t0);
  std::string detail = problems.empty() ? "exact counts at r in {0.2, 0.4}, no self flips, circular stays in super-class"
                                        : problems.front();
  return {problems.empty() && secs < 5.0, detail + ", " + fmt(secs, 3) + " s"};
}

// 9. Episodic few-shot protocol.
Outcome fewshot_protocol() {
  std::vector<std::string> problems;
  SynthSpec s;
  s.num_classes = 20;
  s.per_class = 40;
  s.image_shape = {1, 1, 20};
  s.spread = 0.02;
  s.seed = 9;
  const auto ds = synth_blobs(s);
  for (std::size_t shot : {1u, 5u}) {
    EpisodeSpec e;
    e.k_shot = shot;
    e.seed = 90 + shot;
    for (std::size_t i = 0; i < e.episode_count; ++i) {
      const auto ep = sample_episode(ds, e, i);
      const std::set<int> classes(ep.classes.begin(), ep.classes.end());
      const std::set<std::size_t> sup(ep.support.begin(), ep.support.end());
      bool overlap = false;
      for (auto q : ep.query) overlap |= sup.count(q) > 0;
      if (ep.classes.size() != 5 || classes.size() != 5 || ep.support.size() != 5 * shot ||
          ep.support_labels.size() != 5 * shot || ep.query.size() != 75 || ep.query_labels.size() != 75 ||
          sup.size() != 5 * shot || std::set<std::size_t>(ep.query.begin(), ep.query.end()).size() != 75 || overlap) {
        problems.push_back(std::to_string(shot) + "-shot episode " + std::to_string(i) + " malformed");
        break;
      }
    }
  }

  std::mt19937_64 rng(909);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (std::size_t len : {2u, 3u, 10u, 800u}) {
    std::vector<double> acc(len);
    for (auto& a : acc) a = u(rng);
    double mean = 0.0;
    for (double a : acc) mean += a;
    mean /= static_cast<double>(len);
    double ss = 0.0;
    for (double a : acc) ss += (a - mean) * (a - mean);
    const double closed = 1.96 * std::sqrt(ss / static_cast<double>(len - 1)) / std::sqrt(static_cast<double>(len));
    worst = std::max(worst, std::abs(confidence_interval95(acc) - closed));
  }
  if (worst > 1e-12) problems.push_back("CI off by " + fmt(worst, 3));

  EpisodeSpec e;
  const EmbedFn embed = [](const Tensor<float>& x) {
    std::vector<float> v(x.data().begin(), x.data().end());
    for (auto& f : v) f -= 0.5f;
    return Tensor<float>({x.dim(0), x.size() / x.dim(0)}, std::move(v));
  };
  const auto score = nearest_centroid_eval(embed, ds, e);
  if (score.mean != 1.0) problems.push_back("nearest centroid scored " + fmt(100.0 * score.mean) + "%");
  return {problems.empty(), problems.empty() ? "1/5-shot shapes exact, disjoint over 800 episodes, CI abs err " + fmt(worst, 3) +
                                                   ", nearest centroid 100%"
                                             : problems.front()};
}

// 10. Reproducibility and binary formats.
Outcome determinism_and_formats(const fs::path& out) {
  std::vector<std::string> problems;
  ExperimentConfig cfg;
  cfg.name = "determinism";
  cfg.kind = ExperimentKind::W2sNoGt;
  cfg.weak.input_shape = cfg.strong.input_shape = {1, 1, 8};
  cfg.weak.num_classes = cfg.strong.num_classes = 4;
  cfg.strong.hidden = {32};
  cfg.dataset.synth = {4, 60, {1, 1, 8}, 0.3, 2, 2};
  cfg.dataset.standardize = true;
  cfg.loss.method = Method::AdaptConf;
  cfg.loss.gt_weight = 0.0;
  cfg.optim.epochs = 3;
  cfg.optim.batch_size = 32;
  cfg.teacher_fraction = 0.2;
  cfg.save_checkpoints = false;
  std::vector<char> csv[2];
  for (int i = 0; i < 2; ++i) {
    cfg.out_dir = (out / ("determinism_" + std::to_string(i))).string();
    run_experiment(cfg);
    csv[i] = slurp(fs::path(cfg.out_dir) / "results.csv");
  }
  if (csv[0].empty() || csv[0] != csv[1]) problems.push_back("results.csv differs between identical runs");

  ModelConfig mc;
  mc.input_shape = {1, 1, 8};
  mc.num_classes = 4;
  mc.hidden = {16};
  auto model = Model<float>::build(mc, 5);
  SynthSpec s{4, 20, {1, 1, 8}, 0.2, 3, 1};
  OptimConfig o;
  o.epochs = 2;
  o.batch_size = 16;
  TrainOptions topt;
  topt.checkpoint_dir = (out / "ckpt").string();
  topt.checkpoint_every = 2;
  fs::remove_all(topt.checkpoint_dir);
  train(model, synth_blobs(s), LossConfig{}, o, static_cast<const Model<float>*>(nullptr), 1, topt);
  const fs::path first = fs::path(topt.checkpoint_dir) / "epoch_2.w2sc";
  const auto ckpt = load_checkpoint(first);
  save_checkpoint(ckpt, out / "ckpt" / "resaved.w2sc");
  if (slurp(first) != slurp(out / "ckpt" / "resaved.w2sc") || ckpt.momentum.empty()) {
    problems.push_back("checkpoint save-load-save is not byte identical");
  }

  const fs::path fx = W2S_FIXTURE_DIR;
  try {
    const auto idx = load_dataset(fx / "idx", Format::IDX, Split::Train);
    const auto c10 = load_dataset(fx / "cifar10", Format::CIFAR10, Split::Test);
    const auto c100 = load_dataset(fx / "cifar100", Format::CIFAR100, Split::Train);
    if (idx.labels != std::vector<int>{3, 1, 4, 1, 5, 9, 2, 6, 5, 3} ||
        idx.images.data()[784 + 28 + 1] != static_cast<float>((31 + 7 + 3) % 256) / 255.0f ||
        c10.labels != std::vector<int>{0, 9, 5} || c100.labels != std::vector<int>{11, 98, 40} ||
        !c100.coarse_labels || *c100.coarse_labels != std::vector<int>{4, 19, 7}) {
      problems.push_back("golden fixture contents differ");
    }
  } catch (const std::exception& e) {
    problems.push_back(std::string("golden fixture failed to load: ") + e.what());
  }
  auto rejects = [&](const std::function<void()>& f, const std::string& what) {
    try {
      f();
      problems.push_back(what + " accepted");
    } catch (const ParseError&) {
    }
  };
  std::vector<float> px;
  std::vector<int> l, c;
  rejects([&] { parse_idx_images(slurp_bytes(fx / "bad/idx_bad_magic")); }, "IDX bad magic");
  rejects([&] { parse_idx_images(slurp_bytes(fx / "bad/idx_truncated")); }, "truncated IDX");
  rejects([&] { parse_idx_labels(slurp_bytes(fx / "bad/idx_labels_bad_magic")); }, "IDX labels bad magic");
  rejects([&] { parse_idx_labels(slurp_bytes(fx / "bad/idx_labels_truncated")); }, "truncated IDX labels");
  rejects([&] { parse_cifar(slurp_bytes(fx / "bad/cifar10_truncated"), Format::CIFAR10, px, l, c); }, "truncated CIFAR-10");
  rejects([&] { parse_cifar(slurp_bytes(fx / "bad/cifar100_truncated"), Format::CIFAR100, px, l, c); },
          "truncated CIFAR-100");
  auto bytes = serialize(ckpt);
  bytes[1] = 'x';
  rejects([&] { deserialize(bytes); }, "checkpoint bad magic");

  return {problems.empty(), problems.empty() ? "results.csv and checkpoint bytes reproduce; parsers match golden fixtures "
                                               "and reject truncation and bad magic"
                                             : problems.front()};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  fs::path out = fs::temp_directory_path() / "w2s_acceptance";
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string tok;
      while (std::getline(ss, tok, ',')) only.insert(std::stoi(tok));
    } else if (a == "--out" && i + 1 < argc) {
      out = argv[++i];
    } else {
      std::cerr << "usage: w2s_acceptance [--only N[,N...]] [--out DIR]\n";
      return 2;
    }
  }
  auto wanted = [&](int n) { return only.empty() || only.count(n) > 0; };
  fs::create_directories(out);

  W2sRuns w2s_runs;
  if (wanted(5) || wanted(6) || wanted(7)) w2s_runs = run_w2s(out, wanted(5) || wanted(7), wanted(6));

  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, gradients},
      {2, beta_invariants},
      {3, oracle_equivalence},
      {4, reductions},
      {5, [&] { return no_gt_gain(w2s_runs); }},
      {6, [&] { return gt_non_inferior(w2s_runs); }},
      {7, [&] { return beta_dynamics(w2s_runs); }},
      {8, noise_machinery},
      {9, fewshot_protocol},
      {10, [&] { return determinism_and_formats(out); }},
  };
  int failures = 0;
  for (const auto& [n, check] : criteria) {
    if (!wanted(n)) continue;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
