#include "w2s/losses.hpp"

#include <algorithm>
#include <cmath>

#include "w2s/errors.hpp"
#include "w2s/ops.hpp"

namespace w2s {

std::string to_string(Method method) {
  switch (method) {
    case Method::CE: return "CE";
    case Method::KD: return "KD";
    case Method::AugConf: return "AugConf";
    case Method::AdaptConf: return "AdaptConf";
  }
  return "?";
}

Method method_from_string(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "ce") return Method::CE;
  if (s == "kd") return Method::KD;
  if (s == "augconf") return Method::AugConf;
  if (s == "adaptconf") return Method::AdaptConf;
  throw ConfigError("unknown loss method '" + name + "'");
}

void LossConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("alpha must lie in [0,1], got " + std::to_string(alpha));
  }
  if (!(temperature > 0.0)) {
    throw ConfigError("temperature must be positive, got " + std::to_string(temperature));
  }
  if (!(gt_weight >= 0.0)) throw ConfigError("gt_weight must be non-negative");
  if (!(distill_weight >= 0.0)) throw ConfigError("distill_weight must be non-negative");
  if (!(prob_clamp > 0.0 && prob_clamp <= 1e-6)) {
    throw ConfigError("prob_clamp must lie in (0, 1e-6]");
  }
}

void to_json(nlohmann::json& j, const LossConfig& cfg) {
  j = nlohmann::json{{"method", to_string(cfg.method)},
                     {"alpha", cfg.alpha},
                     {"temperature", cfg.temperature},
                     {"gt_weight", cfg.gt_weight},
                     {"distill_weight", cfg.distill_weight},
                     {"prob_clamp", cfg.prob_clamp},
                     {"hard_teacher_target", cfg.hard_teacher_target}};
}

void from_json(const nlohmann::json& j, LossConfig& cfg) {
  cfg = LossConfig{};
  if (j.contains("method")) cfg.method = method_from_string(j.at("method").get<std::string>());
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.temperature = j.value("temperature", cfg.temperature);
  cfg.gt_weight = j.value("gt_weight", cfg.gt_weight);
  cfg.distill_weight = j.value("distill_weight", cfg.distill_weight);
  cfg.prob_clamp = j.value("prob_clamp", cfg.prob_clamp);
  cfg.hard_teacher_target = j.value("hard_teacher_target", cfg.hard_teacher_target);
}

template <typename Real>
int argmax(std::span<const Real> row) {
  int best = 0;
  for (std::size_t j = 1; j < row.size(); ++j)
    if (row[j] > row[static_cast<std::size_t>(best)]) best = static_cast<int>(j);
  return best;
}

template <typename Real>
TeacherSignal<Real> TeacherSignal<Real>::from_logits(const Tensor<Real>& logits) {
  const Tensor<Real> p = ops::softmax(logits.detach(), Real(1));
  auto s = from_probs(std::vector<Real>(p.data().begin(), p.data().end()), logits.dim(1));
  s.logits.assign(logits.data().begin(), logits.data().end());
  return s;
}

template <typename Real>
TeacherSignal<Real> TeacherSignal<Real>::from_probs(std::vector<Real> soft, std::size_t classes) {
  if (classes == 0 || soft.size() % classes != 0) {
    throw ShapeError("teacher probabilities do not form rows of " + std::to_string(classes));
  }
  TeacherSignal s;
  s.classes = classes;
  s.rows = soft.size() / classes;
  s.soft = std::move(soft);
  s.hard.resize(s.rows);
  for (std::size_t r = 0; r < s.rows; ++r) {
    std::span<const Real> row(s.soft.data() + r * classes, classes);
    Real total = 0;
    for (Real v : row) {
      if (!(v >= Real(0))) throw NumericError("teacher probabilities must be non-negative");
      total += v;
    }
    if (std::abs(static_cast<double>(total) - 1.0) > 1e-5) {
      throw NumericError("teacher row " + std::to_string(r) + " does not sum to 1");
    }
    s.hard[r] = argmax(row);
  }
  return s;
}

template <typename Real>
std::vector<Real> TeacherSignal<Real>::softened(Real temperature, Real eps) const {
  if (temperature == Real(1)) return soft;
  if (!logits.empty()) {
    const Tensor<Real> p = ops::softmax(Tensor<Real>({rows, classes}, logits), temperature);
    return {p.data().begin(), p.data().end()};
  }
  std::vector<Real> out(soft.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* p = soft.data() + r * classes;
    Real* q = out.data() + r * classes;
    Real m = -std::numeric_limits<Real>::infinity();
    for (std::size_t j = 0; j < classes; ++j) {
      q[j] = std::log(std::max(p[j], eps)) / temperature;
      m = std::max(m, q[j]);
    }
    Real total = 0;
    for (std::size_t j = 0; j < classes; ++j) {
      q[j] = std::exp(q[j] - m);
      total += q[j];
    }
    for (std::size_t j = 0; j < classes; ++j) q[j] /= total;
  }
  return out;
}

template <typename Real>
std::vector<Real> TeacherSignal<Real>::one_hot() const {
  std::vector<Real> out(rows * classes, Real(0));
  for (std::size_t r = 0; r < rows; ++r) out[r * classes + static_cast<std::size_t>(hard[r])] = 1;
  return out;
}

template <typename Real>
Tensor<Real> softmax_T(const Tensor<Real>& logits, Real temperature, Tape<Real>* tape) {
  return ops::softmax(logits, temperature, tape);
}

template <typename Real>
Tensor<Real> ce_soft(const Tensor<Real>& student_probs, const Tensor<Real>& target_probs, Real eps,
                     Tape<Real>* tape) {
  if (student_probs.shape() != target_probs.shape()) {
    throw ShapeError("ce_soft: " + shape_str(student_probs.shape()) + " vs " +
                     shape_str(target_probs.shape()));
  }
  return ops::cross_entropy_soft(student_probs, target_probs.data(), eps, tape);
}

template <typename Real>
Tensor<Real> ce_hard(const Tensor<Real>& student_probs, std::span<const int> labels, Real eps,
                     Tape<Real>* tape) {
  return ops::cross_entropy_hard(student_probs, labels, eps, tape);
}

namespace {

template <typename Real>
void check_teacher(const Tensor<Real>& student_logits, const TeacherSignal<Real>& teacher) {
  if (student_logits.rank() != 2 || student_logits.dim(0) != teacher.rows ||
      student_logits.dim(1) != teacher.classes) {
    throw ShapeError("teacher signal [" + std::to_string(teacher.rows) + "," +
                     std::to_string(teacher.classes) + "] does not match student logits " +
                     shape_str(student_logits.shape()));
  }
}

// T^2 / N * sum_i KL_i with the teacher side supplied as probabilities.
template <typename Real>
Tensor<Real> kd_from_probs(const Tensor<Real>& student_logits, std::span<const Real> teacher_probs,
                           Real temperature, Real eps, Tape<Real>* tape) {
  const std::size_t n = student_logits.dim(0), k = student_logits.dim(1);
  const Tensor<Real> ps = ops::softmax(student_logits, temperature, tape);
  const Tensor<Real> ce = ops::cross_entropy_soft(ps, teacher_probs, eps, tape);
  const Real s = temperature * temperature / static_cast<Real>(n);
  Real entropy = 0;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < k; ++j) {
      const Real t = teacher_probs[r * k + j];
      if (t != Real(0)) entropy -= t * std::log(std::max(t, eps));
    }
  const std::vector<Real> w(n, s);
  return ops::add(ops::weighted_sum(ce, std::span<const Real>(w), tape),
                  Tensor<Real>::scalar(-s * entropy), tape);
}

template <typename Real>
std::vector<int> row_argmax(const Tensor<Real>& probs) {
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  std::vector<int> out(n);
  auto d = probs.data();
  for (std::size_t r = 0; r < n; ++r) out[r] = argmax(d.subspan(r * k, k));
  return out;
}

template <typename Real>
std::vector<Real> first_term_target(const TeacherSignal<Real>& teacher, const LossConfig& cfg) {
  if (cfg.hard_teacher_target) return teacher.one_hot();
  return teacher.softened(static_cast<Real>(cfg.temperature), static_cast<Real>(cfg.prob_clamp));
}

// Shared body of AugConf and AdaptConf: per-sample self weights w_i give
// T^2/N sum_i [(1 - w_i) CE(p_i, target_i) + w_i CE(p_i, argmax p_i)].
template <typename Real>
Tensor<Real> confidence_blend(const Tensor<Real>& student_probs, const TeacherSignal<Real>& teacher,
                              std::span<const Real> self_weight, const LossConfig& cfg,
                              Tape<Real>* tape) {
  const std::size_t n = student_probs.dim(0);
  const Real eps = static_cast<Real>(cfg.prob_clamp);
  const Real t = static_cast<Real>(cfg.temperature);
  const Real s = t * t / static_cast<Real>(n);

  const std::vector<Real> target = first_term_target(teacher, cfg);
  const Tensor<Real> soft = ops::cross_entropy_soft(student_probs, std::span<const Real>(target), eps, tape);
  const std::vector<int> self_label = row_argmax(student_probs);
  const Tensor<Real> hard = ops::cross_entropy_hard(student_probs, std::span<const int>(self_label), eps, tape);

  std::vector<Real> w_soft(n), w_hard(n);
  for (std::size_t i = 0; i < n; ++i) {
    w_soft[i] = (Real(1) - self_weight[i]) * s;
    w_hard[i] = self_weight[i] * s;
  }
  return ops::add(ops::weighted_sum(soft, std::span<const Real>(w_soft), tape),
                  ops::weighted_sum(hard, std::span<const Real>(w_hard), tape), tape);
}

}  // namespace

template <typename Real>
Tensor<Real> kd_loss(const Tensor<Real>& student_logits, const Tensor<Real>& teacher_logits,
                     Real temperature, Tape<Real>* tape, Real eps) {
  if (student_logits.shape() != teacher_logits.shape()) {
    throw ShapeError("kd_loss: " + shape_str(student_logits.shape()) + " vs " +
                     shape_str(teacher_logits.shape()));
  }
  const Tensor<Real> pt = ops::softmax(teacher_logits.detach(), temperature);
  return kd_from_probs(student_logits, pt.data(), temperature, eps, tape);
}

template <typename Real>
Tensor<Real> augconf_loss(const Tensor<Real>& student_logits, const TeacherSignal<Real>& teacher,
                          const LossConfig& cfg, Tape<Real>* tape) {
  cfg.validate();
  check_teacher(student_logits, teacher);
  const Tensor<Real> ps = ops::softmax(student_logits, static_cast<Real>(cfg.temperature), tape);
  const std::vector<Real> alpha(teacher.rows, static_cast<Real>(cfg.alpha));
  return confidence_blend(ps, teacher, std::span<const Real>(alpha), cfg, tape);
}

template <typename Real>
double beta_weight(std::span<const Real> student_probs_T, int weak_hard, double eps) {
  if (weak_hard < 0 || static_cast<std::size_t>(weak_hard) >= student_probs_T.size()) {
    throw ContractError("beta_weight: weak label " + std::to_string(weak_hard) + " out of range");
  }
  double p_max = 0;
  for (Real v : student_probs_T) p_max = std::max(p_max, static_cast<double>(v));
  p_max = std::max(p_max, eps);
  const double p_weak = std::max(static_cast<double>(student_probs_T[static_cast<std::size_t>(weak_hard)]), eps);
  return p_weak / (p_max + p_weak);
}

template <typename Real>
std::vector<Real> beta_weights(const Tensor<Real>& student_probs_T, std::span<const int> weak_hard,
                               double eps) {
  const std::size_t n = student_probs_T.dim(0), k = student_probs_T.dim(1);
  if (weak_hard.size() != n) throw ShapeError("beta_weights: label count does not match rows");
  std::vector<Real> out(n);
  auto d = student_probs_T.data();
  for (std::size_t r = 0; r < n; ++r)
    out[r] = static_cast<Real>(beta_weight(d.subspan(r * k, k), weak_hard[r], eps));
  return out;
}

template <typename Real>
Tensor<Real> adaptconf_loss(const Tensor<Real>& student_logits, const TeacherSignal<Real>& teacher,
                            const LossConfig& cfg, Tape<Real>* tape,
                            std::optional<std::span<const Real>> beta_override) {
  cfg.validate();
  check_teacher(student_logits, teacher);
  const Tensor<Real> ps = ops::softmax(student_logits, static_cast<Real>(cfg.temperature), tape);
  if (beta_override) {
    if (beta_override->size() != teacher.rows) {
      throw ShapeError("adaptconf_loss: beta override has wrong length");
    }
    return confidence_blend(ps, teacher, *beta_override, cfg, tape);
  }
  const std::vector<Real> beta = beta_weights(ps, std::span<const int>(teacher.hard), cfg.prob_clamp);
  return confidence_blend(ps, teacher, std::span<const Real>(beta), cfg, tape);
}

template <typename Real>
Tensor<Real> soft_target_loss(const Tensor<Real>& student_logits, const TeacherSignal<Real>& teacher,
                              const LossConfig& cfg, Tape<Real>* tape) {
  check_teacher(student_logits, teacher);
  const std::size_t n = teacher.rows;
  const Real t = static_cast<Real>(cfg.temperature);
  const Tensor<Real> ps = ops::softmax(student_logits, t, tape);
  const std::vector<Real> target = first_term_target(teacher, cfg);
  const Tensor<Real> soft = ops::cross_entropy_soft(ps, std::span<const Real>(target),
                                                    static_cast<Real>(cfg.prob_clamp), tape);
  const std::vector<Real> w(n, t * t / static_cast<Real>(n));
  return ops::weighted_sum(soft, std::span<const Real>(w), tape);
}

template <typename Real>
Tensor<Real> self_label_loss(const Tensor<Real>& student_logits, const LossConfig& cfg,
                             Tape<Real>* tape) {
  const std::size_t n = student_logits.dim(0);
  const Real t = static_cast<Real>(cfg.temperature);
  const Tensor<Real> ps = ops::softmax(student_logits, t, tape);
  const std::vector<int> self_label = row_argmax(ps);
  const Tensor<Real> hard = ops::cross_entropy_hard(ps, std::span<const int>(self_label),
                                                    static_cast<Real>(cfg.prob_clamp), tape);
  const std::vector<Real> w(n, t * t / static_cast<Real>(n));
  return ops::weighted_sum(hard, std::span<const Real>(w), tape);
}

template <typename Real>
Tensor<Real> method_loss(const Tensor<Real>& student_logits, const TeacherSignal<Real>& teacher,
                         const LossConfig& cfg, Tape<Real>* tape) {
  check_teacher(student_logits, teacher);
  const Real t = static_cast<Real>(cfg.temperature);
  switch (cfg.method) {
    case Method::CE:
      return {};
    case Method::KD: {
      const std::vector<Real> pt = teacher.softened(t, static_cast<Real>(cfg.prob_clamp));
      return kd_from_probs(student_logits, std::span<const Real>(pt), t,
                           static_cast<Real>(cfg.prob_clamp), tape);
    }
    case Method::AugConf:
      return augconf_loss(student_logits, teacher, cfg, tape);
    case Method::AdaptConf:
      return adaptconf_loss(student_logits, teacher, cfg, tape);
  }
  return {};
}

template <typename Real>
Tensor<Real> total_objective(const Tensor<Real>& student_logits, const TeacherSignal<Real>* teacher,
                             std::optional<std::span<const int>> gt_labels, const LossConfig& cfg,
                             Tape<Real>* tape) {
  cfg.validate();
  if (teacher == nullptr && !gt_labels) {
    throw ConfigError("total_objective needs a teacher signal, ground-truth labels, or both");
  }
  const std::size_t n = student_logits.dim(0);
  Tensor<Real> gt_term;
  if (gt_labels && cfg.gt_weight > 0.0) {
    const Tensor<Real> p = ops::softmax(student_logits, Real(1), tape);
    const Tensor<Real> ce = ops::cross_entropy_hard(p, *gt_labels, static_cast<Real>(cfg.prob_clamp), tape);
    const std::vector<Real> w(n, static_cast<Real>(cfg.gt_weight) / static_cast<Real>(n));
    gt_term = ops::weighted_sum(ce, std::span<const Real>(w), tape);
  }
  Tensor<Real> distill_term;
  if (teacher != nullptr && cfg.distill_weight > 0.0) {
    distill_term = method_loss(student_logits, *teacher, cfg, tape);
    if (distill_term.defined() && cfg.distill_weight != 1.0) {
      distill_term = ops::scale(distill_term, static_cast<Real>(cfg.distill_weight), tape);
    }
  }
  if (gt_term.defined() && distill_term.defined()) return ops::add(gt_term, distill_term, tape);
  if (gt_term.defined()) return gt_term;
  if (distill_term.defined()) return distill_term;
  return Tensor<Real>::scalar(Real(0));
}

double BetaRecord::mean() const {
  if (values.empty()) return 0.0;
  double total = 0;
  for (double v : values) total += v;
  return total / static_cast<double>(values.size());
}

double BetaRecord::frac_half() const {
  if (values.empty()) return 0.0;
  return static_cast<double>(agree) / static_cast<double>(values.size());
}

std::size_t beta_bin(double beta) {
  const double scaled = std::ceil(beta * 2.0 * static_cast<double>(kBetaBins));
  if (scaled <= 1.0) return 0;
  return std::min(kBetaBins - 1, static_cast<std::size_t>(scaled) - 1);
}

std::array<std::size_t, kBetaBins> BetaRecord::histogram() const {
  std::array<std::size_t, kBetaBins> counts{};
  for (double v : values) ++counts[beta_bin(v)];
  return counts;
}

void BetaRecord::merge(const BetaRecord& other) {
  values.insert(values.end(), other.values.begin(), other.values.end());
  agree += other.agree;
}

template <typename Real>
BetaRecord beta_stats(const Tensor<Real>& student_logits, const TeacherSignal<Real>& teacher,
                      Real temperature, double eps) {
  if (student_logits.rank() != 2 || student_logits.dim(0) == 0 || teacher.rows == 0) {
    throw ContractError("beta_stats: empty batch");
  }
  check_teacher(student_logits, teacher);
  const Tensor<Real> ps = ops::softmax(student_logits.detach(), temperature);
  const std::vector<Real> beta = beta_weights(ps, std::span<const int>(teacher.hard), eps);
  const std::vector<int> self_label = row_argmax(ps);
  BetaRecord rec;
  rec.values.assign(beta.begin(), beta.end());
  for (std::size_t i = 0; i < teacher.rows; ++i)
    if (self_label[i] == teacher.hard[i]) ++rec.agree;
  return rec;
}

#define W2S_INSTANTIATE_LOSSES(Real)                                                              \
  template int argmax(std::span<const Real>);                                                     \
  template struct TeacherSignal<Real>;                                                            \
  template Tensor<Real> softmax_T(const Tensor<Real>&, Real, Tape<Real>*);                        \
  template Tensor<Real> ce_soft(const Tensor<Real>&, const Tensor<Real>&, Real, Tape<Real>*);     \
  template Tensor<Real> ce_hard(const Tensor<Real>&, std::span<const int>, Real, Tape<Real>*);    \
  template Tensor<Real> kd_loss(const Tensor<Real>&, const Tensor<Real>&, Real, Tape<Real>*, Real); \
  template Tensor<Real> augconf_loss(const Tensor<Real>&, const TeacherSignal<Real>&,             \
                                     const LossConfig&, Tape<Real>*);                             \
  template double beta_weight(std::span<const Real>, int, double);                                \
  template std::vector<Real> beta_weights(const Tensor<Real>&, std::span<const int>, double);     \
  template Tensor<Real> adaptconf_loss(const Tensor<Real>&, const TeacherSignal<Real>&,           \
                                       const LossConfig&, Tape<Real>*,                            \
                                       std::optional<std::span<const Real>>);                     \
  template Tensor<Real> soft_target_loss(const Tensor<Real>&, const TeacherSignal<Real>&,         \
                                         const LossConfig&, Tape<Real>*);                         \
  template Tensor<Real> self_label_loss(const Tensor<Real>&, const LossConfig&, Tape<Real>*);     \
  template Tensor<Real> method_loss(const Tensor<Real>&, const TeacherSignal<Real>&,              \
                                    const LossConfig&, Tape<Real>*);                              \
  template Tensor<Real> total_objective(const Tensor<Real>&, const TeacherSignal<Real>*,          \
                                        std::optional<std::span<const int>>, const LossConfig&,   \
                                        Tape<Real>*);                                             \
  template BetaRecord beta_stats(const Tensor<Real>&, const TeacherSignal<Real>&, Real, double);

W2S_INSTANTIATE_LOSSES(float)
W2S_INSTANTIATE_LOSSES(double)

#undef W2S_INSTANTIATE_LOSSES

}  // namespace w2s
