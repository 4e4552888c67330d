#include <cmath>
#include <cstring>
#include <random>

#include "doctest.h"
#include "oracle.hpp"
#include "w2s/errors.hpp"
#include "w2s/grad_check.hpp"
#include "w2s/losses.hpp"
#include "w2s/models.hpp"
#include "w2s/ops.hpp"

using namespace w2s;
using T = Tensor<double>;

namespace {

T logits_of(std::vector<double> probs, std::size_t k) {
  for (auto& p : probs) p = std::log(p);
  const std::size_t rows = probs.size() / k;
  return T({rows, k}, std::move(probs), true);
}

LossConfig cfg(Method m, double alpha = 0.5, double temp = 1.0) {
  LossConfig c;
  c.method = m;
  c.alpha = alpha;
  c.temperature = temp;
  return c;
}

bool bitwise_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

std::vector<double> random_logits(std::mt19937_64& rng, std::size_t n, double scale) {
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

const std::vector<double> kStudent{0.7, 0.2, 0.1};
const std::vector<double> kTeacher{0.1, 0.8, 0.1};

}  // namespace

TEST_CASE("softmax_T values") {
  const auto a = softmax_T(T({1, 2}, {2, 0}), 1.0);
  CHECK(a.data()[0] == doctest::Approx(0.8808).epsilon(1e-4));
  CHECK(a.data()[1] == doctest::Approx(0.1192).epsilon(1e-3));
  const auto b = softmax_T(T({1, 2}, {2, 0}), 2.0);
  CHECK(b.data()[0] == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK(b.data()[1] == doctest::Approx(0.2689).epsilon(1e-4));
  const auto u = softmax_T(T({1, 4}, {5, -3, 0.5, 9}), 1e6);
  for (double p : u.data()) CHECK(std::abs(p - 0.25) <= 1e-5);
}

TEST_CASE("temperature flattens the max probability") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto z = random_logits(rng, 6, 3.0);
    double prev = 1.0;
    for (double t : {0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 100.0}) {
      const auto p = softmax_T(T({1, 6}, z), t);
      const double m = *std::max_element(p.data().begin(), p.data().end());
      CHECK(m <= prev + 1e-15);
      prev = m;
    }
  }
}

TEST_CASE("ce_soft and ce_hard values") {
  const T p({1, 3}, kStudent);
  CHECK(ce_soft(p, T({1, 3}, kTeacher)).item() == doctest::Approx(1.5535).epsilon(1e-4));
  CHECK(ce_soft(T({1, 2}, {1, 0}), T({1, 2}, {1, 0})).item() == 0.0);
  CHECK(ce_soft(T({1, 4}, {0.25, 0.25, 0.25, 0.25}), T({1, 4}, {0.1, 0.2, 0.3, 0.4})).item() ==
        doctest::Approx(std::log(4.0)).epsilon(1e-14));
  const std::vector<int> l0{0}, l1{1};
  CHECK(ce_hard(p, std::span<const int>(l0)).item() == doctest::Approx(0.3567).epsilon(1e-4));
  CHECK(ce_hard(p, std::span<const int>(l1)).item() == doctest::Approx(1.6094).epsilon(1e-4));
  CHECK(ce_hard(T({1, 2}, {1, 0}), std::span<const int>(l0)).item() == 0.0);
  const std::vector<int> bad{3};
  CHECK_THROWS_AS(ce_hard(p, std::span<const int>(bad)), ContractError);
}

TEST_CASE("kd_loss values") {
  CHECK(kd_loss(T({1, 3}, {1, 2, 3}), T({1, 3}, {1, 2, 3}), 1.0).item() == doctest::Approx(0.0).epsilon(1e-8));
  const double t1 = kd_loss(T({1, 2}, {0, 2}), T({1, 2}, {2, 0}), 1.0).item();
  CHECK(t1 == doctest::Approx(1.5232).epsilon(1e-4));
  // Two classes: KL = (p - q) ln(p / q) with p - q = tanh(1 / T).
  CHECK(t1 == doctest::Approx(2.0 * std::tanh(1.0)).epsilon(1e-12));
  const double t2 = kd_loss(T({1, 2}, {0, 2}), T({1, 2}, {2, 0}), 2.0).item();
  CHECK(t2 == doctest::Approx(1.8485).epsilon(1e-4));
  CHECK(t2 == doctest::Approx(4.0 * std::tanh(0.5)).epsilon(1e-12));
}

TEST_CASE("kd_loss is non-negative and zero only on equal distributions") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = random_logits(rng, 10, 2.0), t = random_logits(rng, 10, 2.0);
    CHECK(kd_loss(T({2, 5}, s), T({2, 5}, t), 1.5).item() > 0.0);
    CHECK(std::abs(kd_loss(T({2, 5}, s), T({2, 5}, s), 1.5).item()) <= 1e-8);
  }
}

TEST_CASE("augconf values and endpoints") {
  const auto ts = TeacherSignal<double>::from_probs(kTeacher, 3);
  const T z = logits_of(kStudent, 3);
  CHECK(augconf_loss(z, ts, cfg(Method::AugConf, 0.5)).item() == doctest::Approx(0.9551).epsilon(1e-4));
  CHECK(augconf_loss(z, ts, cfg(Method::AugConf, 0.5)).item() ==
        doctest::Approx(0.5 * oracle::ce(kStudent, kTeacher) + 0.5 * -std::log(0.7)).epsilon(1e-12));

  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const T s({4, 5}, random_logits(rng, 20, 2.0));
    const auto t = TeacherSignal<double>::from_logits(T({4, 5}, random_logits(rng, 20, 2.0)));
    for (double temp : {1.0, 3.0}) {
      CHECK(bitwise_equal(augconf_loss(s, t, cfg(Method::AugConf, 0.0, temp)).item(),
                          soft_target_loss(s, t, cfg(Method::AugConf, 0.0, temp)).item()));
      CHECK(bitwise_equal(augconf_loss(s, t, cfg(Method::AugConf, 1.0, temp)).item(),
                          self_label_loss(s, cfg(Method::AugConf, 1.0, temp)).item()));
    }
  }
}

TEST_CASE("beta values") {
  CHECK(beta_weight(std::span<const double>(kStudent), 1) == doctest::Approx(0.2222).epsilon(1e-4));
  CHECK(beta_weight(std::span<const double>(kStudent), 1) == doctest::Approx(2.0 / 9.0).epsilon(1e-14));
  CHECK(beta_weight(std::span<const double>(kStudent), 0) == 0.5);
  const std::vector<double> uniform(7, 1.0 / 7.0);
  for (int w = 0; w < 7; ++w) CHECK(beta_weight(std::span<const double>(uniform), w) == 0.5);
}

TEST_CASE("beta bounds and agreement over random distributions") {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> label(0, 5);
  for (int trial = 0; trial < 5000; ++trial) {
    const auto z = random_logits(rng, 6, trial % 2 ? 8.0 : 1.0);
    const auto p = oracle::softmax(z, 1.0);
    const int w = label(rng);
    const double b = beta_weight(std::span<const double>(p), w);
    CHECK(b > 0.0);
    CHECK(b <= 0.5);
    CHECK((b == 0.5) == (argmax(std::span<const double>(p)) == w || p[static_cast<std::size_t>(w)] ==
                                                                        p[static_cast<std::size_t>(argmax(std::span<const double>(p)))]));
    CHECK(b == doctest::Approx(oracle::beta(p, w)).epsilon(1e-6));
  }
}

TEST_CASE("adaptconf values") {
  const auto ts = TeacherSignal<double>::from_probs(kTeacher, 3);
  const T z = logits_of(kStudent, 3);
  CHECK(adaptconf_loss(z, ts, cfg(Method::AdaptConf)).item() == doctest::Approx(1.2876).epsilon(1e-4));
  CHECK(adaptconf_loss(z, ts, cfg(Method::AdaptConf)).item() ==
        doctest::Approx(oracle::adaptconf({oracle::Row(z.data().begin(), z.data().end())}, {{std::log(0.1), std::log(0.8), std::log(0.1)}}, 1.0))
            .epsilon(1e-12));

  // Full agreement: beta is 0.5 everywhere.
  const auto agree = TeacherSignal<double>::from_probs({0.6, 0.3, 0.1, 0.2, 0.1, 0.7}, 3);
  const T s2 = logits_of({0.5, 0.3, 0.2, 0.1, 0.2, 0.7}, 3);
  const double want = 0.5 * soft_target_loss(s2, agree, cfg(Method::AdaptConf)).item() +
                      0.5 * self_label_loss(s2, cfg(Method::AdaptConf)).item();
  CHECK(adaptconf_loss(s2, agree, cfg(Method::AdaptConf)).item() == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("adaptconf with pinned beta is augconf bitwise") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const T s({6, 4}, random_logits(rng, 24, 2.0));
    const auto t = TeacherSignal<double>::from_logits(T({6, 4}, random_logits(rng, 24, 2.0)));
    for (double alpha : {0.0, 0.25, 0.5, 0.9}) {
      const std::vector<double> pinned(6, alpha);
      const double a = adaptconf_loss<double>(s, t, cfg(Method::AdaptConf, 0.5, 2.0), nullptr,
                                      std::optional<std::span<const double>>(pinned)).item();
      CHECK(bitwise_equal(a, augconf_loss(s, t, cfg(Method::AugConf, alpha, 2.0)).item()));
    }
  }
}

TEST_CASE("softened teacher targets") {
  // exp(-40) is far below the clamp, so only the logits can recover the tail at T = 4
  const std::vector<double> z{40.0, 0.0, 1.0};
  const auto from_z = TeacherSignal<double>::from_logits(T({1, 3}, z));
  const auto q = from_z.softened(4.0, 1e-12);
  const auto exact = oracle::softmax(z, 4.0);
  for (std::size_t j = 0; j < 3; ++j) CHECK(q[j] == doctest::Approx(exact[j]).epsilon(1e-14));
  CHECK(from_z.softened(1.0, 1e-12) == from_z.soft);

  // probability-only signals fall back to clamped p^(1/T)
  const auto from_p = TeacherSignal<double>::from_probs({0.5, 0.5, 0.0}, 3);
  const auto r = from_p.softened(2.0, 1e-12);
  const double tail = std::sqrt(1e-12);
  CHECK(r[2] == doctest::Approx(tail / (2.0 * std::sqrt(0.5) + tail)).epsilon(1e-12));
}

TEST_CASE("confidence losses agree with the scalar oracle") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 3, k = 5;
    const auto sv = random_logits(rng, n * k, 3.0), tv = random_logits(rng, n * k, 3.0);
    std::vector<oracle::Row> s, t;
    for (std::size_t i = 0; i < n; ++i) {
      s.emplace_back(sv.begin() + static_cast<std::ptrdiff_t>(i * k), sv.begin() + static_cast<std::ptrdiff_t>((i + 1) * k));
      t.emplace_back(tv.begin() + static_cast<std::ptrdiff_t>(i * k), tv.begin() + static_cast<std::ptrdiff_t>((i + 1) * k));
    }
    const double temp = 0.5 + trial % 4;
    const auto ts = TeacherSignal<double>::from_logits(T({n, k}, tv));
    CHECK(augconf_loss(T({n, k}, sv), ts, cfg(Method::AugConf, 0.3, temp)).item() ==
          doctest::Approx(oracle::augconf(s, t, 0.3, temp)).epsilon(1e-6));
    CHECK(adaptconf_loss(T({n, k}, sv), ts, cfg(Method::AdaptConf, 0.5, temp)).item() ==
          doctest::Approx(oracle::adaptconf(s, t, temp)).epsilon(1e-6));
    CHECK(kd_loss(T({n, k}, sv), T({n, k}, tv), temp).item() == doctest::Approx(oracle::kd(s, t, temp)).epsilon(1e-6));
  }
}

TEST_CASE("total_objective composition") {
  const auto ts = TeacherSignal<double>::from_probs(kTeacher, 3);
  const T z = logits_of(kStudent, 3);
  const std::vector<int> gt{0};
  const std::span<const int> labels(gt);

  LossConfig supervised = cfg(Method::AdaptConf);
  supervised.distill_weight = 0.0;
  CHECK(total_objective(z, &ts, labels, supervised).item() == doctest::Approx(-std::log(0.7)).epsilon(1e-14));

  LossConfig nogt = cfg(Method::AdaptConf);
  nogt.gt_weight = 0.0;
  CHECK(total_objective(z, &ts, labels, nogt).item() == adaptconf_loss(z, ts, nogt).item());

  const LossConfig both = cfg(Method::AdaptConf);
  CHECK(total_objective(z, &ts, labels, both).item() == doctest::Approx(-std::log(0.7) + 1.2876).epsilon(1e-4));

  const LossConfig ce = cfg(Method::CE);
  CHECK(total_objective<double>(z, nullptr, labels, ce).item() == doctest::Approx(-std::log(0.7)).epsilon(1e-14));
  CHECK_THROWS_AS(total_objective<double>(z, nullptr, std::nullopt, ce), ConfigError);
}

TEST_CASE("total_objective gradients for every method") {
  ModelConfig mc;
  mc.family = Family::Mlp;
  mc.input_shape = {1, 1, 6};
  mc.num_classes = 5;
  mc.hidden = {8};
  auto model = Model<double>::build(mc, 1);
  std::mt19937_64 rng(11);
  const T x({4, 1, 1, 6}, random_logits(rng, 24, 1.0));
  const std::vector<int> gt{0, 3, 1, 4};
  const auto ts = TeacherSignal<double>::from_logits(T({4, 5}, random_logits(rng, 20, 2.0)));
  std::vector<T> params;
  for (auto& p : model.params()) {
    p.value.set_requires_grad(true);
    params.push_back(p.value);
  }
  for (Method m : {Method::CE, Method::KD, Method::AugConf, Method::AdaptConf}) {
    for (double temp : {1.0, 2.0}) {
      LossConfig c = cfg(m, 0.3, temp);
      std::optional<std::vector<double>> pinned;
      if (m == Method::AdaptConf) {
        // beta is detached; hold it at the base point so finite differences
        // see the same function the tape differentiates.
        const auto p = softmax_T(model.forward(x), temp);
        pinned = beta_weights(p, ts.hard);
      }
      INFO(to_string(m), " T=", temp);
      const double err = grad_check([&](Tape<double>& tape) {
        const T logits = model.forward(x, &tape);
        if (pinned) {
          const T gt_term = ops::weighted_sum(
              ops::cross_entropy_hard(ops::softmax(logits, 1.0, &tape), std::span<const int>(gt), 1e-12, &tape),
              std::span<const double>(std::vector<double>(4, 0.25)), &tape);
          return ops::add(gt_term, adaptconf_loss(logits, ts, c, &tape,
                                                  std::optional<std::span<const double>>(*pinned)), &tape);
        }
        return total_objective(logits, m == Method::CE ? nullptr : &ts, std::span<const int>(gt), c, &tape);
      }, params);
      CHECK(err <= 1e-5);
    }
  }
}

TEST_CASE("teacher side never receives gradients") {
  T teacher_logits({2, 3}, {1, 2, 3, 0, -1, 2}, true);
  T s({2, 3}, {0.5, 0.1, -0.2, 1, 1, 0}, true);
  const auto ts = TeacherSignal<double>::from_logits(teacher_logits);
  for (Method m : {Method::KD, Method::AugConf, Method::AdaptConf}) {
    Tape<double> tape;
    const T loss = m == Method::KD ? kd_loss(s, teacher_logits.detach(), 2.0, &tape)
                                   : method_loss(s, ts, cfg(m, 0.5, 2.0), &tape);
    tape.backward(loss);
    CHECK(s.has_grad());
    CHECK_FALSE(teacher_logits.has_grad());
    s.clear_grad();
  }
}

TEST_CASE("beta statistics") {
  // Rows: agreement (beta 0.5) and p = [0.6, 0.2, 0.2] against weak label 1 (beta 0.25).
  const auto ts = TeacherSignal<double>::from_probs({0.1, 0.8, 0.1, 0.3, 0.4, 0.3}, 3);
  const T z = logits_of({0.2, 0.7, 0.1, 0.6, 0.2, 0.2}, 3);
  const BetaRecord rec = beta_stats(z, ts, 1.0);
  CHECK(rec.values[0] == 0.5);
  CHECK(rec.values[1] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(rec.mean() == doctest::Approx(0.375).epsilon(1e-12));
  CHECK(rec.frac_half() == 0.5);
  const auto h = rec.histogram();
  CHECK(h[kBetaBins - 1] == 1);
  // 0.25 sits on a bin edge, so the computed value may land on either side.
  CHECK(h[beta_bin(rec.values[1])] == 1);
  CHECK(beta_bin(0.25) == 9);

  const auto self = TeacherSignal<double>::from_logits(T({2, 3}, {0.2, 0.7, 0.1, 0.6, 0.2, 0.2}));
  CHECK(beta_stats(T({2, 3}, {0.2, 0.7, 0.1, 0.6, 0.2, 0.2}), self, 1.0).frac_half() == 1.0);
  CHECK(beta_bin(0.5) == kBetaBins - 1);
  CHECK(beta_bin(0.025) == 0);
  CHECK(beta_bin(0.0251) == 1);
}

TEST_CASE("loss config validation and json") {
  LossConfig c = cfg(Method::AugConf, 1.5);
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = cfg(Method::KD, 0.5, 0.0);
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = cfg(Method::AdaptConf, 0.2, 3.0);
  c.gt_weight = 0.0;
  CHECK(nlohmann::json(c).get<LossConfig>() == c);
  CHECK(method_from_string("AdaptConf") == Method::AdaptConf);
  CHECK_THROWS_AS(method_from_string("nope"), ConfigError);
}

TEST_CASE("argmax ties go to the lowest index") {
  const std::vector<double> row{0.3, 0.3, 0.1, 0.3};
  CHECK(argmax(std::span<const double>(row)) == 0);
  const std::vector<double> row2{0.1, 0.4, 0.4};
  CHECK(argmax(std::span<const double>(row2)) == 1);
}
