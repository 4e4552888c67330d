#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "w2s/tensor.hpp"

namespace w2s {

enum class Method { CE, KD, AugConf, AdaptConf };

std::string to_string(Method method);
Method method_from_string(const std::string& name);

struct LossConfig {
  Method method = Method::CE;
  double alpha = 0.5;           // AugConf blend weight
  double temperature = 1.0;     // applied to every distillation CE term
  double gt_weight = 1.0;       // lambda_gt; 0 selects the teacher-prediction-only regime
  double distill_weight = 1.0;  // lambda_d
  double prob_clamp = 1e-12;    // probabilities are clamped to [prob_clamp, 1] before logs
  // Use the weak model's hard label instead of its soft distribution as the
  // first-term target of AugConf/AdaptConf.
  bool hard_teacher_target = false;

  void validate() const;
  bool operator==(const LossConfig&) const = default;
};

void to_json(nlohmann::json& j, const LossConfig& cfg);
void from_json(const nlohmann::json& j, LossConfig& cfg);

// Lowest index among the maxima of row[0..k).
template <typename Real>
int argmax(std::span<const Real> row);

/**
 * Frozen weak-model output for a batch: temperature-1 softmax rows and their
 * argmax. Carries no gradient.
 */
template <typename Real>
struct TeacherSignal {
  std::size_t rows = 0;
  std::size_t classes = 0;
  std::vector<Real> soft;  // rows * classes
  std::vector<int> hard;   // rows
  std::vector<Real> logits;  // rows * classes when built from logits, else empty

  static TeacherSignal from_logits(const Tensor<Real>& logits);
  static TeacherSignal from_probs(std::vector<Real> soft, std::size_t classes);

  // Rows of softmax(z / T). Exact when logits are kept; otherwise recovered
  // from the clamped probabilities as p^(1/T) renormalized.
  std::vector<Real> softened(Real temperature, Real eps) const;
  std::vector<Real> one_hot() const;
};

// Row-wise softmax(logits / T).
template <typename Real>
Tensor<Real> softmax_T(const Tensor<Real>& logits, Real temperature, Tape<Real>* tape = nullptr);

// Per-sample -sum_k target_k ln(clamp(student_k)) -> [N].
template <typename Real>
Tensor<Real> ce_soft(const Tensor<Real>& student_probs, const Tensor<Real>& target_probs,
                     Real eps = Real(1e-12), Tape<Real>* tape = nullptr);

// Per-sample -ln(clamp(student[label])) -> [N].
template <typename Real>
Tensor<Real> ce_hard(const Tensor<Real>& student_probs, std::span<const int> labels,
                     Real eps = Real(1e-12), Tape<Real>* tape = nullptr);

// Batch mean of T^2 * KL(softmax_T(teacher) || softmax_T(student)).
template <typename Real>
Tensor<Real> kd_loss(const Tensor<Real>& student_logits, const Tensor<Real>& teacher_logits,
                     Real temperature, Tape<Real>* tape = nullptr, Real eps = Real(1e-12));

// Batch mean of T^2 [(1-a) CE(f_T, teacher_T) + a CE(f_T, argmax f)].
template <typename Real>
Tensor<Real> augconf_loss(const Tensor<Real>& student_logits, const TeacherSignal<Real>& teacher,
                          const LossConfig& cfg, Tape<Real>* tape = nullptr);

// beta = exp(CE_self) / (exp(CE_self) + exp(CE_weak)) = p_weak / (p_max + p_weak),
// both probabilities clamped. Always in (0, 0.5].
template <typename Real>
double beta_weight(std::span<const Real> student_probs_T, int weak_hard, double eps = 1e-12);

// Per-sample beta for every row of a probability matrix.
template <typename Real>
std::vector<Real> beta_weights(const Tensor<Real>& student_probs_T, std::span<const int> weak_hard,
                               double eps = 1e-12);

/**
 * Adaptive confidence loss: AugConf with alpha replaced by a per-sample,
 * detached beta(x) computed on the temperature-T student distribution.
 * `beta_override`, when given, pins beta to the supplied values.
 */
template <typename Real>
Tensor<Real> adaptconf_loss(const Tensor<Real>& student_logits, const TeacherSignal<Real>& teacher,
                            const LossConfig& cfg, Tape<Real>* tape = nullptr,
                            std::optional<std::span<const Real>> beta_override = std::nullopt);

// Single-term references the confidence losses reduce to at alpha = 0 / 1.
template <typename Real>
Tensor<Real> soft_target_loss(const Tensor<Real>& student_logits, const TeacherSignal<Real>& teacher,
                              const LossConfig& cfg, Tape<Real>* tape = nullptr);
template <typename Real>
Tensor<Real> self_label_loss(const Tensor<Real>& student_logits, const LossConfig& cfg,
                             Tape<Real>* tape = nullptr);

// The method term alone (0-weight CE method returns an undefined tensor).
template <typename Real>
Tensor<Real> method_loss(const Tensor<Real>& student_logits, const TeacherSignal<Real>& teacher,
                         const LossConfig& cfg, Tape<Real>* tape = nullptr);

/**
 * lambda_gt * CE(softmax(student), one_hot(gt)) + lambda_d * method_loss.
 * Missing teacher or labels drop their term; both missing is a ConfigError.
 */
template <typename Real>
Tensor<Real> total_objective(const Tensor<Real>& student_logits, const TeacherSignal<Real>* teacher,
                             std::optional<std::span<const int>> gt_labels, const LossConfig& cfg,
                             Tape<Real>* tape = nullptr);

inline constexpr std::size_t kBetaBins = 20;

struct BetaRecord {
  std::size_t epoch = 0;
  std::vector<double> values;
  std::size_t agree = 0;  // samples whose student argmax equals the weak hard label

  double mean() const;
  double frac_half() const;
  // Counts over (0, 0.5] in kBetaBins equal bins; bin i covers (i/40, (i+1)/40].
  std::array<std::size_t, kBetaBins> histogram() const;

  // Appends another partial record (callers merge in batch-index order).
  void merge(const BetaRecord& other);
};

std::size_t beta_bin(double beta);

template <typename Real>
BetaRecord beta_stats(const Tensor<Real>& student_logits, const TeacherSignal<Real>& teacher,
                      Real temperature, double eps = 1e-12);

}  // namespace w2s
