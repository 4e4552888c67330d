#include "w2s/models.hpp"

#include <cmath>
#include <random>

#include "w2s/errors.hpp"
#include "w2s/ops.hpp"

namespace w2s {

std::string to_string(Family family) {
  return family == Family::Mlp ? "mlp" : "convnet";
}

Family family_from_string(const std::string& name) {
  if (name == "mlp" || name == "MLP") return Family::Mlp;
  if (name == "convnet" || name == "ConvNet") return Family::ConvNet;
  throw ConfigError("unknown model family '" + name + "'");
}

namespace {

struct ConvGeometry {
  std::vector<Shape> maps;  // (C, H, W) after each conv layer
};

// Stride-1 layers keep the extent (kernel k, pad k/2). Stride-2 layers use an
// even kernel k+1 with pad (k-1)/2, which halves any even extent exactly.
struct LayerShape {
  std::size_t stride, kernel, pad;
};

LayerShape layer_shape(const ModelConfig& cfg, std::size_t i) {
  if (cfg.strided[i]) return {2, cfg.kernel + 1, (cfg.kernel - 1) / 2};
  return {1, cfg.kernel, cfg.kernel / 2};
}

ConvGeometry conv_geometry(const ModelConfig& cfg) {
  ConvGeometry geo;
  std::size_t c = cfg.input_shape[0], h = cfg.input_shape[1], w = cfg.input_shape[2];
  for (std::size_t i = 0; i < cfg.hidden.size(); ++i) {
    const auto [stride, kernel, pad] = layer_shape(cfg, i);
    auto extent = [&](std::size_t in) {
      const std::size_t padded = in + 2 * pad;
      if (padded < kernel || (padded - kernel) % stride != 0) {
        throw ConfigError("convnet layer " + std::to_string(i) + ": input extent " +
                          std::to_string(in) + " gives a non-integer output size");
      }
      return (padded - kernel) / stride + 1;
    };
    h = extent(h);
    w = extent(w);
    c = cfg.hidden[i];
    geo.maps.push_back({c, h, w});
  }
  return geo;
}

std::size_t flat_input(const ModelConfig& cfg) { return numel(cfg.input_shape); }

}  // namespace

void ModelConfig::validate() const {
  if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
  if (input_shape.size() != 3) {
    throw ConfigError("input_shape must be (C, H, W), got " + shape_str(input_shape));
  }
  for (auto d : input_shape)
    if (d == 0) throw ConfigError("input_shape dimensions must be positive");
  for (auto w : hidden)
    if (w == 0) throw ConfigError("layer widths must be positive");
  if (family == Family::ConvNet) {
    if (hidden.empty()) throw ConfigError("convnet needs at least one conv layer");
    if (strided.size() != hidden.size()) {
      throw ConfigError("convnet needs one stride flag per conv layer");
    }
    if (kernel == 0 || kernel % 2 == 0) throw ConfigError("convnet kernel must be odd");
    conv_geometry(*this);
  }
}

void to_json(nlohmann::json& j, const ModelConfig& cfg) {
  j = nlohmann::json{{"family", to_string(cfg.family)},
                     {"input_shape", cfg.input_shape},
                     {"num_classes", cfg.num_classes},
                     {"hidden", cfg.hidden}};
  if (cfg.family == Family::ConvNet) {
    j["strided"] = cfg.strided;
    j["kernel"] = cfg.kernel;
  }
}

void from_json(const nlohmann::json& j, ModelConfig& cfg) {
  cfg = ModelConfig{};
  cfg.family = family_from_string(j.at("family").get<std::string>());
  cfg.input_shape = j.at("input_shape").get<Shape>();
  cfg.num_classes = j.at("num_classes").get<std::size_t>();
  cfg.hidden = j.value("hidden", std::vector<std::size_t>{});
  if (cfg.family == Family::ConvNet) {
    cfg.strided = j.value("strided", std::vector<bool>(cfg.hidden.size(), false));
    cfg.kernel = j.value("kernel", std::size_t{3});
  }
}

std::size_t num_params(const ModelConfig& cfg) {
  cfg.validate();
  std::size_t total = 0;
  if (cfg.family == Family::Mlp) {
    std::size_t in = flat_input(cfg);
    for (auto width : cfg.hidden) {
      total += in * width + width;
      in = width;
    }
    return total + in * cfg.num_classes + cfg.num_classes;
  }
  const auto geo = conv_geometry(cfg);
  std::size_t c = cfg.input_shape[0];
  for (std::size_t i = 0; i < cfg.hidden.size(); ++i) {
    const std::size_t k = layer_shape(cfg, i).kernel;
    total += cfg.hidden[i] * c * k * k + cfg.hidden[i];
    c = cfg.hidden[i];
  }
  const std::size_t features = numel(geo.maps.back());
  return total + features * cfg.num_classes + cfg.num_classes;
}

template <typename Real>
Model<Real> Model<Real>::build(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::vector<NamedParameter<Real>> params;

  auto normal = [&](Shape shape, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<Real> data(numel(shape));
    for (auto& v : data) v = static_cast<Real>(dist(rng));
    return Tensor<Real>(std::move(shape), std::move(data), true);
  };
  auto zeros = [](Shape shape) { return Tensor<Real>::zeros(std::move(shape), true); };

  std::size_t head_in = 0;
  if (config.family == Family::Mlp) {
    std::size_t in = flat_input(config);
    for (std::size_t i = 0; i < config.hidden.size(); ++i) {
      const std::size_t out = config.hidden[i];
      const std::string name = "fc" + std::to_string(i);
      params.push_back({name + ".weight", normal({in, out}, std::sqrt(2.0 / in))});
      params.push_back({name + ".bias", zeros({out})});
      in = out;
    }
    head_in = in;
  } else {
    const auto geo = conv_geometry(config);
    std::size_t c = config.input_shape[0];
    for (std::size_t i = 0; i < config.hidden.size(); ++i) {
      const std::size_t k = layer_shape(config, i).kernel;
      const std::size_t out = config.hidden[i];
      const std::string name = "conv" + std::to_string(i);
      params.push_back({name + ".weight", normal({out, c, k, k}, std::sqrt(2.0 / (c * k * k)))});
      params.push_back({name + ".bias", zeros({out})});
      c = out;
    }
    head_in = numel(geo.maps.back());
  }
  params.push_back({"head.weight", normal({head_in, config.num_classes}, std::sqrt(1.0 / head_in))});
  params.push_back({"head.bias", zeros({config.num_classes})});
  return Model(config, std::move(params));
}

template <typename Real>
void Model<Real>::check_batch(const Tensor<Real>& batch) const {
  const auto& s = batch.shape();
  Shape expected{0};
  expected.insert(expected.end(), config_.input_shape.begin(), config_.input_shape.end());
  bool ok = s.size() == expected.size();
  for (std::size_t i = 1; ok && i < s.size(); ++i) ok = s[i] == expected[i];
  if (!ok) {
    throw ShapeError("model input: expected [N," + shape_str(config_.input_shape).substr(1) +
                     ", got " + shape_str(s));
  }
}

template <typename Real>
Tensor<Real> Model<Real>::head_input(const Tensor<Real>& batch, Tape<Real>* tape) const {
  check_batch(batch);
  const std::size_t n = batch.dim(0);
  std::size_t p = 0;
  if (config_.family == Family::Mlp) {
    Tensor<Real> x = ops::reshape(batch, {n, flat_input(config_)}, tape);
    for (std::size_t i = 0; i < config_.hidden.size(); ++i, p += 2) {
      x = ops::relu(ops::add_bias(ops::matmul(x, params_[p].value, tape), params_[p + 1].value, tape),
                    tape);
    }
    return x;
  }
  Tensor<Real> x = batch;
  for (std::size_t i = 0; i < config_.hidden.size(); ++i, p += 2) {
    const auto [stride, kernel, pad] = layer_shape(config_, i);
    x = ops::relu(ops::add_channel_bias(ops::conv2d(x, params_[p].value, stride, pad, tape),
                                        params_[p + 1].value, tape),
                  tape);
  }
  return ops::reshape(x, {n, x.size() / n}, tape);
}

template <typename Real>
Tensor<Real> Model<Real>::features(const Tensor<Real>& batch, Tape<Real>* tape) const {
  return head_input(batch, tape);
}

template <typename Real>
Tensor<Real> Model<Real>::forward(const Tensor<Real>& batch, Tape<Real>* tape) const {
  const Tensor<Real> h = head_input(batch, tape);
  const std::size_t p = params_.size() - 2;
  return ops::add_bias(ops::matmul(h, params_[p].value, tape), params_[p + 1].value, tape);
}

template <typename Real>
std::size_t Model<Real>::num_params() const {
  std::size_t total = 0;
  for (const auto& p : params_) total += p.value.size();
  return total;
}

template <typename Real>
void Model<Real>::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

template <typename Real>
Model<Real> Model<Real>::clone() const {
  std::vector<NamedParameter<Real>> copy;
  copy.reserve(params_.size());
  for (const auto& p : params_) copy.push_back({p.name, p.value.clone()});
  return Model(config_, std::move(copy));
}

template class Model<float>;
template class Model<double>;

}  // namespace w2s
