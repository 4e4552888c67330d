#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "w2s/errors.hpp"
#include "w2s/harness.hpp"
#include "w2s/models.hpp"

using namespace w2s;

namespace {

ModelConfig mlp(Shape input, std::size_t k, std::vector<std::size_t> hidden) {
  ModelConfig c;
  c.family = Family::Mlp;
  c.input_shape = std::move(input);
  c.num_classes = k;
  c.hidden = std::move(hidden);
  return c;
}

ModelConfig convnet(Shape input, std::size_t k, std::vector<std::size_t> channels, std::vector<bool> strided) {
  ModelConfig c = mlp(std::move(input), k, std::move(channels));
  c.family = Family::ConvNet;
  c.strided = std::move(strided);
  return c;
}

template <typename Real>
Tensor<Real> ramp(Shape s) {
  std::vector<Real> v(numel(s));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<Real>(std::sin(0.37 * static_cast<double>(i)));
  return Tensor<Real>(std::move(s), std::move(v));
}

}  // namespace

TEST_CASE("parameter counts") {
  CHECK(num_params(mlp({1, 28, 28}, 10, {32})) == 784 * 32 + 32 + 32 * 10 + 10);
  CHECK(num_params(mlp({1, 28, 28}, 10, {32})) == 25450);
  CHECK(num_params(mlp({1, 1, 2}, 5, {})) == 15);
  const auto cfg = convnet({1, 28, 28}, 10, {8, 16}, {false, true});
  CHECK(Model<float>::build(cfg, 0).num_params() == num_params(cfg));
  CHECK(num_params(cfg) == (8 * 1 * 9 + 8) + (16 * 8 * 16 + 16) + (16 * 14 * 14 * 10 + 10));
  CHECK_THROWS_AS(num_params(convnet({1, 7, 7}, 10, {8}, {true})), ConfigError);
}

TEST_CASE("building twice with one seed gives identical bytes") {
  const auto cfg = mlp({1, 28, 28}, 10, {32});
  const auto a = Model<float>::build(cfg, 0), b = Model<float>::build(cfg, 0), c = Model<float>::build(cfg, 1);
  bool differs = false;
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    const auto& x = a.params()[i].value;
    CHECK(std::memcmp(x.data().data(), b.params()[i].value.data().data(), x.size() * sizeof(float)) == 0);
    differs |= std::memcmp(x.data().data(), c.params()[i].value.data().data(), x.size() * sizeof(float)) != 0;
  }
  CHECK(differs);
  CHECK(a.params()[0].name == "fc0.weight");
  CHECK(a.params().back().name == "head.bias");
}

TEST_CASE("convnet forward shape") {
  const auto model = Model<float>::build(convnet({1, 28, 28}, 10, {8, 16}, {false, false}), 0);
  CHECK(model.forward(ramp<float>({3, 1, 28, 28})).shape() == Shape{3, 10});
  const auto strided = Model<float>::build(convnet({3, 8, 8}, 4, {4, 4}, {true, true}), 0);
  CHECK(strided.forward(ramp<float>({2, 3, 8, 8})).shape() == Shape{2, 4});
  CHECK(strided.features(ramp<float>({2, 3, 8, 8})).shape() == Shape{2, 4 * 2 * 2});
}

TEST_CASE("zero head weights give bias logits") {
  auto model = Model<double>::build(mlp({1, 1, 6}, 3, {5}), 4);
  auto& params = model.params();
  for (auto& v : params[params.size() - 2].value.data()) v = 0.0;
  const std::vector<double> bias{0.5, -1.0, 2.0};
  std::copy(bias.begin(), bias.end(), params.back().value.data().begin());
  const auto logits = model.forward(ramp<double>({4, 1, 1, 6}));
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t k = 0; k < 3; ++k) CHECK(logits.data()[r * 3 + k] == bias[k]);
}

TEST_CASE("forward is pure and row independent") {
  const auto model = Model<float>::build(convnet({1, 6, 6}, 3, {4}, {true}), 9);
  std::vector<float> rows;
  const auto one = ramp<float>({1, 1, 6, 6});
  for (int r = 0; r < 4; ++r) rows.insert(rows.end(), one.data().begin(), one.data().end());
  const Tensor<float> batch({4, 1, 6, 6}, rows);
  const auto before = model.params()[0].value.clone();
  const auto a = model.forward(batch), b = model.forward(batch);
  CHECK(std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) == 0);
  for (std::size_t r = 1; r < 4; ++r)
    for (std::size_t k = 0; k < 3; ++k) CHECK(a.data()[r * 3 + k] == a.data()[k]);
  CHECK(std::memcmp(before.data().data(), model.params()[0].value.data().data(), before.size() * sizeof(float)) == 0);
}

TEST_CASE("tiny mlp golden logits") {
  // Frozen from a double-precision run of this build; guards init and forward.
  const auto model = Model<double>::build(mlp({1, 1, 4}, 3, {5}), 0);
  const auto logits = model.forward(ramp<double>({2, 1, 1, 4}));
  const std::vector<double> golden{0.50735607934974136, 0.14735340692036011, 0.1830903228444333,
                                   1.0760560014311635,  0.31320266160636739, 0.38759281112621552};
  REQUIRE(logits.size() == golden.size());
  for (std::size_t i = 0; i < golden.size(); ++i) CHECK(logits.data()[i] == doctest::Approx(golden[i]).epsilon(1e-12));
}

TEST_CASE("batch shape is checked") {
  const auto model = Model<float>::build(mlp({1, 1, 4}, 3, {5}), 0);
  CHECK_THROWS_AS(model.forward(ramp<float>({2, 1, 1, 5})), ShapeError);
  CHECK_THROWS_AS(model.forward(ramp<float>({2, 4})), ShapeError);
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(mlp({1, 1, 4}, 1, {}).validate(), ConfigError);
  CHECK_THROWS_AS(mlp({4}, 3, {}).validate(), ConfigError);
  CHECK_THROWS_AS(mlp({1, 1, 4}, 3, {0}).validate(), ConfigError);
  auto c = convnet({1, 8, 8}, 3, {4}, {});
  CHECK_THROWS_AS(c.validate(), ConfigError);
  const auto j = nlohmann::json(convnet({1, 8, 8}, 3, {4, 8}, {true, false}));
  CHECK(j.get<ModelConfig>() == convnet({1, 8, 8}, 3, {4, 8}, {true, false}));
}

TEST_CASE("logits are finite on dataset inputs after init") {
  SynthSpec spec;
  spec.num_classes = 4;
  spec.per_class = 16;
  spec.image_shape = {1, 6, 6};
  const auto ds = synth_blobs(spec);
  for (const auto& cfg : {mlp({1, 6, 6}, 4, {64, 64}), convnet({1, 6, 6}, 4, {8, 8}, {false, true})}) {
    const auto logits = Model<float>::build(cfg, 3).forward(ds.images);
    for (float v : logits.data()) CHECK(std::isfinite(v));
  }
}

TEST_CASE("shipped recipes pair a smaller weak model with a larger strong one") {
  std::size_t seen = 0;
  for (const auto& entry : std::filesystem::directory_iterator(W2S_CONFIG_DIR)) {
    if (entry.path().extension() != ".json") continue;
    const auto cfg = load_experiment_config(entry.path());
    if (cfg.kind == ExperimentKind::Scratch) continue;
    INFO(entry.path().string());
    CHECK(num_params(cfg.weak) < num_params(cfg.strong));
    ++seen;
  }
  CHECK(seen >= 4);
}
