#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "w2s/tensor.hpp"

namespace w2s {

enum class Family { Mlp, ConvNet };

std::string to_string(Family family);
Family family_from_string(const std::string& name);

/**
 * Declarative network description.
 *
 * Mlp: `hidden` lists the widths of the relu layers between the flattened
 * input and the K-way output layer (may be empty: a linear classifier).
 * ConvNet: `hidden` lists conv channel widths, `strided[i]` selects stride 2
 * for layer i (stride 1 otherwise). Stride-1 convs are kernel x kernel with
 * padding kernel/2; stride-2 convs are (kernel+1) x (kernel+1) with padding
 * (kernel-1)/2, so even extents halve exactly. Every conv is followed by relu. A linear head maps the flattened last
 * feature map to K logits.
 */
struct ModelConfig {
  Family family = Family::Mlp;
  Shape input_shape;  // per-sample (C, H, W)
  std::size_t num_classes = 2;
  std::vector<std::size_t> hidden;
  std::vector<bool> strided;  // ConvNet only
  std::size_t kernel = 3;     // ConvNet only

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& cfg);
void from_json(const nlohmann::json& j, ModelConfig& cfg);

template <typename Real>
struct NamedParameter {
  std::string name;
  Tensor<Real> value;
};

template <typename Real>
class Model {
 public:
  // He-normal weights (std sqrt(2/fan_in)) ahead of relus, LeCun-normal
  // (std sqrt(1/fan_in)) for the output layer, zero biases.
  static Model build(const ModelConfig& config, std::uint64_t seed);

  // Logits [N, K]. Never mutates parameters.
  Tensor<Real> forward(const Tensor<Real>& batch, Tape<Real>* tape = nullptr) const;

  // Penultimate representation [N, F]: the last hidden activation (or the
  // flattened input for a linear model).
  Tensor<Real> features(const Tensor<Real>& batch, Tape<Real>* tape = nullptr) const;

  const ModelConfig& config() const noexcept { return config_; }
  std::vector<NamedParameter<Real>>& params() noexcept { return params_; }
  const std::vector<NamedParameter<Real>>& params() const noexcept { return params_; }
  std::size_t num_params() const;

  void zero_grad();
  Model clone() const;

 private:
  Model(ModelConfig config, std::vector<NamedParameter<Real>> params)
      : config_(std::move(config)), params_(std::move(params)) {}

  Tensor<Real> head_input(const Tensor<Real>& batch, Tape<Real>* tape) const;
  void check_batch(const Tensor<Real>& batch) const;

  ModelConfig config_;
  std::vector<NamedParameter<Real>> params_;
};

// Parameter count implied by a config, without building it.
std::size_t num_params(const ModelConfig& config);

template <typename Real>
std::size_t num_params(const Model<Real>& model) {
  return model.num_params();
}

extern template class Model<float>;
extern template class Model<double>;

}  // namespace w2s
