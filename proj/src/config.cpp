#include <algorithm>
#include <cmath>
#include <fstream>

#include "rng.hpp"
#include "w2s/errors.hpp"
#include "w2s/harness.hpp"

namespace w2s {

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Scratch: return "scratch";
    case ExperimentKind::W2sGt: return "w2s_gt";
    case ExperimentKind::W2sNoGt: return "w2s_nogt";
    case ExperimentKind::Noisy: return "noisy";
    case ExperimentKind::FewShot: return "fewshot";
  }
  return "?";
}

ExperimentKind kind_from_string(const std::string& name) {
  if (name == "scratch") return ExperimentKind::Scratch;
  if (name == "w2s_gt") return ExperimentKind::W2sGt;
  if (name == "w2s_nogt") return ExperimentKind::W2sNoGt;
  if (name == "noisy") return ExperimentKind::Noisy;
  if (name == "fewshot") return ExperimentKind::FewShot;
  throw ConfigError("unknown experiment kind '" + name + "'");
}

void to_json(nlohmann::json& j, const SynthSpec& s) {
  j = {{"num_classes", s.num_classes}, {"per_class", s.per_class},
       {"image_shape", s.image_shape}, {"spread", s.spread},
       {"seed", s.seed},               {"modes_per_class", s.modes_per_class}};
}

void from_json(const nlohmann::json& j, SynthSpec& s) {
  s = SynthSpec{};
  s.num_classes = j.value("num_classes", s.num_classes);
  s.per_class = j.value("per_class", s.per_class);
  s.image_shape = j.value("image_shape", s.image_shape);
  s.spread = j.value("spread", s.spread);
  s.seed = j.value("seed", s.seed);
  s.modes_per_class = j.value("modes_per_class", s.modes_per_class);
}

void to_json(nlohmann::json& j, const DatasetSpec& d) {
  j = {{"source", d.source},
       {"synth", d.synth},
       {"val_fraction", d.val_fraction},
       {"test_fraction", d.test_fraction},
       {"max_train", d.max_train},
       {"max_test", d.max_test},
       {"split_seed", d.split_seed},
       {"class_split", d.class_split},
       {"standardize", d.standardize}};
  if (d.data_dir) j["data_dir"] = *d.data_dir;
}

void from_json(const nlohmann::json& j, DatasetSpec& d) {
  d = DatasetSpec{};
  d.source = j.value("source", d.source);
  if (j.contains("synth")) d.synth = j.at("synth").get<SynthSpec>();
  if (j.contains("data_dir")) d.data_dir = j.at("data_dir").get<std::string>();
  d.val_fraction = j.value("val_fraction", d.val_fraction);
  d.test_fraction = j.value("test_fraction", d.test_fraction);
  d.max_train = j.value("max_train", d.max_train);
  d.max_test = j.value("max_test", d.max_test);
  d.split_seed = j.value("split_seed", d.split_seed);
  if (j.contains("class_split")) d.class_split = j.at("class_split").get<std::array<double, 3>>();
  d.standardize = j.value("standardize", d.standardize);
}

void to_json(nlohmann::json& j, const NoiseSpec& n) {
  j = {{"kind", n.kind == NoiseKind::Symmetric ? "symmetric" : "asymmetric"},
       {"ratio", n.ratio},
       {"seed", n.seed},
       {"include_original", n.include_original}};
  nlohmann::json map = nlohmann::json::array();
  for (const auto& [from, to] : n.flip_map) map.push_back({from, to});
  j["flip_map"] = map;
}

void from_json(const nlohmann::json& j, NoiseSpec& n) {
  n = NoiseSpec{};
  const std::string kind = j.value("kind", std::string("symmetric"));
  if (kind == "symmetric") n.kind = NoiseKind::Symmetric;
  else if (kind == "asymmetric") n.kind = NoiseKind::Asymmetric;
  else throw ConfigError("unknown noise kind '" + kind + "'");
  n.ratio = j.value("ratio", n.ratio);
  n.seed = j.value("seed", n.seed);
  n.include_original = j.value("include_original", n.include_original);
  if (j.contains("flip_map")) {
    const auto& fm = j.at("flip_map");
    if (fm.is_string()) {
      if (fm.get<std::string>() != "cifar10") throw ConfigError("unknown named flip map");
      n.flip_map = cifar10_flip_map();
    } else {
      for (const auto& pair : fm) n.flip_map[pair.at(0).get<int>()] = pair.at(1).get<int>();
    }
  }
}

void to_json(nlohmann::json& j, const EpisodeSpec& e) {
  j = {{"n_way", e.n_way}, {"k_shot", e.k_shot}, {"q_query", e.q_query},
       {"episode_count", e.episode_count}, {"seed", e.seed}};
}

void from_json(const nlohmann::json& j, EpisodeSpec& e) {
  e = EpisodeSpec{};
  e.n_way = j.value("n_way", e.n_way);
  e.k_shot = j.value("k_shot", e.k_shot);
  e.q_query = j.value("q_query", e.q_query);
  e.episode_count = j.value("episode_count", e.episode_count);
  e.seed = j.value("seed", e.seed);
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  loss.validate();
  optim.validate();
  if (teacher_optim) teacher_optim->validate();
  strong.validate();
  if (kind != ExperimentKind::Scratch) {
    weak.validate();
    if (weak.num_classes != strong.num_classes && kind != ExperimentKind::FewShot) {
      throw ConfigError("weak and strong models disagree on num_classes");
    }
    if (!(teacher_fraction > 0.0 && teacher_fraction <= 1.0)) {
      throw ConfigError("teacher_fraction must lie in (0,1]");
    }
    if (loss.method == Method::CE) {
      throw ConfigError(to_string(kind) + " needs a distillation method (KD, AugConf or AdaptConf)");
    }
  }
  if (kind == ExperimentKind::W2sGt && loss.gt_weight <= 0.0) {
    throw ConfigError("w2s_gt needs gt_weight > 0");
  }
  if (kind == ExperimentKind::Noisy && !noise) throw ConfigError("noisy experiment needs a noise spec");
  if (noise) noise->validate();
  if (kind == ExperimentKind::FewShot && !episodes) {
    throw ConfigError("fewshot experiment needs an episode spec");
  }
  if (!(dataset.val_fraction >= 0.0 && dataset.val_fraction < 1.0) ||
      !(dataset.test_fraction >= 0.0 && dataset.test_fraction < 1.0)) {
    throw ConfigError("dataset fractions must lie in [0,1)");
  }
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"name", c.name},
       {"kind", to_string(c.kind)},
       {"weak", c.weak},
       {"strong", c.strong},
       {"dataset", c.dataset},
       {"loss", c.loss},
       {"optim", c.optim},
       {"teacher_fraction", c.teacher_fraction},
       {"warmup_epochs", c.warmup_epochs},
       {"augment", c.augment},
       {"seeds", c.seeds},
       {"out_dir", c.out_dir},
       {"save_checkpoints", c.save_checkpoints}};
  if (c.noise) j["noise"] = *c.noise;
  if (c.episodes) j["episodes"] = *c.episodes;
  if (c.teacher_optim) j["teacher_optim"] = *c.teacher_optim;
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  c = ExperimentConfig{};
  c.name = j.value("name", c.name);
  c.kind = kind_from_string(j.value("kind", std::string("scratch")));
  c.strong = j.at("strong").get<ModelConfig>();
  if (j.contains("weak")) c.weak = j.at("weak").get<ModelConfig>();
  if (j.contains("dataset")) c.dataset = j.at("dataset").get<DatasetSpec>();
  if (j.contains("noise")) c.noise = j.at("noise").get<NoiseSpec>();
  if (j.contains("episodes")) c.episodes = j.at("episodes").get<EpisodeSpec>();
  if (j.contains("loss")) c.loss = j.at("loss").get<LossConfig>();
  if (j.contains("optim")) c.optim = j.at("optim").get<OptimConfig>();
  if (j.contains("teacher_optim")) c.teacher_optim = j.at("teacher_optim").get<OptimConfig>();
  c.teacher_fraction = j.value("teacher_fraction", c.teacher_fraction);
  c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
  c.augment = j.value("augment", c.augment);
  c.seeds = j.value("seeds", c.seeds);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.save_checkpoints = j.value("save_checkpoints", c.save_checkpoints);
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return nlohmann::json::parse(in).get<ExperimentConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid config " + path.string() + ": " + e.what());
  }
}

namespace {

std::vector<std::size_t> first_of_permutation(std::size_t n, std::size_t take, std::uint64_t seed,
                                              std::uint64_t stream) {
  auto rng = detail::make_rng({seed, stream});
  auto p = detail::permutation(n, rng);
  p.resize(std::min(take, n));
  return p;
}

Dataset limit(const Dataset& ds, std::size_t max, std::uint64_t seed, std::uint64_t stream) {
  if (max == 0 || max >= ds.size()) return ds;
  auto idx = first_of_permutation(ds.size(), max, seed, stream);
  std::sort(idx.begin(), idx.end());
  return ds.subset(idx);
}

}  // namespace

PreparedData prepare_data(const DatasetSpec& spec) {
  Dataset pool, test;
  if (spec.source == "synth") {
    pool = synth_blobs(spec.synth);
    const std::size_t n_test = static_cast<std::size_t>(spec.test_fraction * static_cast<double>(pool.size()));
    auto rng = detail::make_rng({spec.split_seed, 0x7E57ULL});
    const auto order = detail::permutation(pool.size(), rng);
    std::vector<std::size_t> test_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    std::vector<std::size_t> rest(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
    std::sort(test_idx.begin(), test_idx.end());
    std::sort(rest.begin(), rest.end());
    test = pool.subset(test_idx);
    pool = pool.subset(rest);
  } else {
    const Format format = format_from_string(spec.source);
    const auto root = data_root(spec.data_dir);
    pool = load_dataset(root, format, Split::Train);
    test = load_dataset(root, format, Split::Test);
  }
  pool = limit(pool, spec.max_train, spec.split_seed, 1);
  test = limit(test, spec.max_test, spec.split_seed, 2);

  const std::size_t n_val = static_cast<std::size_t>(spec.val_fraction * static_cast<double>(pool.size()));
  auto rng = detail::make_rng({spec.split_seed, 0x7A1ULL});
  const auto order = detail::permutation(pool.size(), rng);
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(train_idx.begin(), train_idx.end());

  PreparedData out;
  out.train = pool.subset(train_idx);
  out.train.name = pool.name + "/train";
  if (!val_idx.empty()) {
    out.val = pool.subset(val_idx);
    out.val.name = pool.name + "/val";
  }
  out.test = std::move(test);
  out.test.name = pool.name + "/test";
  if (spec.standardize) {
    const auto stats = channel_stats(out.train);
    for (Dataset* ds : {&out.train, &out.val, &out.test})
      if (ds->size() > 0) standardize(*ds, stats);
  }
  return out;
}

ChannelStats channel_stats(const Dataset& ds) {
  const Shape s = ds.image_shape();
  const std::size_t c = s[0], plane = s[1] * s[2];
  ChannelStats out{std::vector<double>(c, 0.0), std::vector<double>(c, 0.0)};
  const auto px = ds.images.data();
  const double count = static_cast<double>(ds.size() * plane);
  for (std::size_t n = 0; n < ds.size(); ++n)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < plane; ++i) out.mean[ch] += px[(n * c + ch) * plane + i];
  for (auto& m : out.mean) m /= count;
  for (std::size_t n = 0; n < ds.size(); ++n)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = px[(n * c + ch) * plane + i] - out.mean[ch];
        out.std[ch] += d * d;
      }
  for (auto& v : out.std) v = std::sqrt(v / count);
  return out;
}

void standardize(Dataset& ds, const ChannelStats& stats) {
  const Shape s = ds.image_shape();
  const std::size_t c = s[0], plane = s[1] * s[2];
  if (stats.mean.size() != c || stats.std.size() != c) throw ShapeError("channel statistics do not match the images");
  // Fresh storage: subsets may still alias the caller's tensors.
  std::vector<float> px(ds.images.data().begin(), ds.images.data().end());
  for (std::size_t n = 0; n < ds.size(); ++n)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double sd = stats.std[ch] < 1e-12 ? 1.0 : stats.std[ch];
      for (std::size_t i = 0; i < plane; ++i) {
        float& v = px[(n * c + ch) * plane + i];
        v = static_cast<float>((v - stats.mean[ch]) / sd);
      }
    }
  ds.images = Tensor<float>(ds.images.shape(), std::move(px));
}

}  // namespace w2s
