#include "w2s/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "w2s/errors.hpp"

namespace w2s::ops {
namespace {

template <typename Real>
bool tracking(Tape<Real>* tape, std::initializer_list<const Tensor<Real>*> inputs) {
  if (tape == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor<Real>* t) { return t->requires_grad(); });
}

template <typename Real>
void require_rank(const Tensor<Real>& t, std::size_t rank, const char* op, const char* arg) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + arg + " must have rank " + std::to_string(rank) +
                     ", got " + shape_str(t.shape()));
  }
}

template <typename Real>
void require_same_shape(const Tensor<Real>& a, const Tensor<Real>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

// c[m,n] += a[m,k] * b[k,n]
template <typename Real>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const Real* a, const Real* b, Real* c) {
  for (std::size_t i = 0; i < m; ++i) {
    Real* crow = c + i * n;
    const Real* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = arow[p];
      if (av == Real(0)) continue;
      const Real* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m,k] += a[m,n] * b[k,n]^T
template <typename Real>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const Real* arow = a + i * n;
    Real* crow = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const Real* brow = b + p * n;
      Real acc = 0;
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

// c[k,n] += a[m,k]^T * b[m,n]
template <typename Real>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const Real* a, const Real* b, Real* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const Real* arow = a + i * k;
    const Real* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = arow[p];
      if (av == Real(0)) continue;
      Real* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                            std::size_t pad, const char* axis) {
  const std::size_t padded = in + 2 * pad;
  if (stride == 0) throw ConfigError("conv2d: stride must be positive");
  if (padded < kernel || (padded - kernel) % stride != 0) {
    throw ConfigError(std::string("conv2d: output ") + axis + " is not a positive integer (in=" +
                      std::to_string(in) + ", kernel=" + std::to_string(kernel) +
                      ", stride=" + std::to_string(stride) + ", pad=" + std::to_string(pad) + ")");
  }
  return (padded - kernel) / stride + 1;
}

}  // namespace

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b, Tape<Real>* tape) {
  require_rank(a, 2, "matmul", "a");
  require_rank(b, 2, "matmul", "b");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions disagree: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const bool track = tracking(tape, {&a, &b});
  Tensor<Real> out = Tensor<Real>::zeros({m, n}, track);
  gemm_nn(m, k, n, a.data().data(), b.data().data(), out.data().data());
  if (track) {
    tape->record({a, b}, out, [a, b, out, m, k, n]() mutable {
      const Real* g = out.grad().data();
      if (a.requires_grad()) gemm_nt(m, n, k, g, b.data().data(), a.ensure_grad().data());
      if (b.requires_grad()) gemm_tn(m, k, n, a.data().data(), g, b.ensure_grad().data());
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> add_bias(const Tensor<Real>& x, const Tensor<Real>& bias, Tape<Real>* tape) {
  require_rank(x, 2, "add_bias", "x");
  require_rank(bias, 1, "add_bias", "bias");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (bias.dim(0) != cols) {
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not match " +
                     shape_str(x.shape()));
  }
  const bool track = tracking(tape, {&x, &bias});
  Tensor<Real> out(x.shape(), std::vector<Real>(x.data().begin(), x.data().end()), track);
  auto od = out.data();
  auto bd = bias.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) od[r * cols + c] += bd[c];
  if (track) {
    tape->record({x, bias}, out, [x, bias, out, rows, cols]() mutable {
      auto g = out.grad();
      if (x.requires_grad()) {
        auto gx = x.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (bias.requires_grad()) {
        auto gb = bias.ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
      }
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> conv2d(const Tensor<Real>& input, const Tensor<Real>& kernel, std::size_t stride,
                    std::size_t pad, Tape<Real>* tape) {
  require_rank(input, 4, "conv2d", "input");
  require_rank(kernel, 4, "conv2d", "kernel");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t o = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != c) {
    throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) + " does not match input " +
                     shape_str(input.shape()));
  }
  const std::size_t oh = conv_out_extent(h, kh, stride, pad, "height");
  const std::size_t ow = conv_out_extent(w, kw, stride, pad, "width");
  const bool track = tracking(tape, {&input, &kernel});
  Tensor<Real> out = Tensor<Real>::zeros({n, o, oh, ow}, track);

  // Visits every (output, kernel tap) pair that lands inside the unpadded input.
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t oc = 0; oc < o; ++oc)
        for (std::size_t ic = 0; ic < c; ++ic)
          for (std::size_t ki = 0; ki < kh; ++ki)
            for (std::size_t kj = 0; kj < kw; ++kj) {
              const std::size_t kidx = ((oc * c + ic) * kh + ki) * kw + kj;
              for (std::size_t y = 0; y < oh; ++y) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * stride + ki) -
                                          static_cast<std::ptrdiff_t>(pad);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t x = 0; x < ow; ++x) {
                  const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * stride + kj) -
                                            static_cast<std::ptrdiff_t>(pad);
                  if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                  const std::size_t iidx = ((b * c + ic) * h + iy) * w + ix;
                  const std::size_t oidx = ((b * o + oc) * oh + y) * ow + x;
                  fn(iidx, kidx, oidx);
                }
              }
            }
  };

  {
    auto in = input.data();
    auto kd = kernel.data();
    auto od = out.data();
    for_each_tap([&](std::size_t i, std::size_t k, std::size_t oi) { od[oi] += in[i] * kd[k]; });
  }
  if (track) {
    tape->record({input, kernel}, out, [input, kernel, out, for_each_tap]() mutable {
      auto g = out.grad();
      if (input.requires_grad()) {
        auto gi = input.ensure_grad();
        auto kd = kernel.data();
        for_each_tap([&](std::size_t i, std::size_t k, std::size_t oi) { gi[i] += g[oi] * kd[k]; });
      }
      if (kernel.requires_grad()) {
        auto gk = kernel.ensure_grad();
        auto in = input.data();
        for_each_tap([&](std::size_t i, std::size_t k, std::size_t oi) { gk[k] += g[oi] * in[i]; });
      }
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> add_channel_bias(const Tensor<Real>& x, const Tensor<Real>& bias, Tape<Real>* tape) {
  require_rank(x, 4, "add_channel_bias", "x");
  require_rank(bias, 1, "add_channel_bias", "bias");
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (bias.dim(0) != c) {
    throw ShapeError("add_channel_bias: bias " + shape_str(bias.shape()) + " does not match " +
                     shape_str(x.shape()));
  }
  const bool track = tracking(tape, {&x, &bias});
  Tensor<Real> out(x.shape(), std::vector<Real>(x.data().begin(), x.data().end()), track);
  auto od = out.data();
  auto bd = bias.data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < plane; ++p) od[(b * c + ch) * plane + p] += bd[ch];
  if (track) {
    tape->record({x, bias}, out, [x, bias, out, n, c, plane]() mutable {
      auto g = out.grad();
      if (x.requires_grad()) {
        auto gx = x.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (bias.requires_grad()) {
        auto gb = bias.ensure_grad();
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t p = 0; p < plane; ++p) gb[ch] += g[(b * c + ch) * plane + p];
      }
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> relu(const Tensor<Real>& x, Tape<Real>* tape) {
  const bool track = tracking(tape, {&x});
  auto xd = x.data();
  std::vector<Real> data(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) data[i] = xd[i] > Real(0) ? xd[i] : Real(0);
  Tensor<Real> out(x.shape(), std::move(data), track);
  if (track) {
    tape->record({x}, out, [x, out]() mutable {
      auto g = out.grad();
      auto gx = x.ensure_grad();
      auto xd = x.data();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xd[i] > Real(0)) gx[i] += g[i];
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& x, Shape shape, Tape<Real>* tape) {
  if (numel(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  const bool track = tracking(tape, {&x});
  Tensor<Real> out(std::move(shape), std::vector<Real>(x.data().begin(), x.data().end()), track);
  if (track) {
    tape->record({x}, out, [x, out]() mutable {
      auto g = out.grad();
      auto gx = x.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b, Tape<Real>* tape) {
  require_same_shape(a, b, "add");
  const bool track = tracking(tape, {&a, &b});
  auto ad = a.data();
  auto bd = b.data();
  std::vector<Real> data(ad.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = ad[i] + bd[i];
  Tensor<Real> out(a.shape(), std::move(data), track);
  if (track) {
    tape->record({a, b}, out, [a, b, out]() mutable {
      auto g = out.grad();
      // a and b may alias (y = x + x); each contributes once.
      if (a.requires_grad()) {
        auto ga = a.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b, Tape<Real>* tape) {
  require_same_shape(a, b, "mul");
  const bool track = tracking(tape, {&a, &b});
  auto ad = a.data();
  auto bd = b.data();
  std::vector<Real> data(ad.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = ad[i] * bd[i];
  Tensor<Real> out(a.shape(), std::move(data), track);
  if (track) {
    tape->record({a, b}, out, [a, b, out]() mutable {
      auto g = out.grad();
      // Read both operands before writing: a and b may be the same tensor.
      std::vector<Real> da(g.size()), db(g.size());
      auto ad = a.data();
      auto bd = b.data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        da[i] = g[i] * bd[i];
        db[i] = g[i] * ad[i];
      }
      if (a.requires_grad()) {
        auto ga = a.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += da[i];
      }
      if (b.requires_grad()) {
        auto gb = b.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += db[i];
      }
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& x, Real factor, Tape<Real>* tape) {
  const bool track = tracking(tape, {&x});
  auto xd = x.data();
  std::vector<Real> data(xd.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = xd[i] * factor;
  Tensor<Real> out(x.shape(), std::move(data), track);
  if (track) {
    tape->record({x}, out, [x, out, factor]() mutable {
      auto g = out.grad();
      auto gx = x.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& x, Tape<Real>* tape) {
  const bool track = tracking(tape, {&x});
  Real total = 0;
  for (Real v : x.data()) total += v;
  Tensor<Real> out = Tensor<Real>::scalar(total, track);
  if (track) {
    tape->record({x}, out, [x, out]() mutable {
      const Real g = out.grad()[0];
      for (auto& gx : x.ensure_grad()) gx += g;
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> mean(const Tensor<Real>& x, Tape<Real>* tape) {
  return scale(sum(x, tape), Real(1) / static_cast<Real>(x.size()), tape);
}

template <typename Real>
Tensor<Real> weighted_sum(const Tensor<Real>& x, std::span<const Real> weights, Tape<Real>* tape) {
  if (weights.size() != x.size()) {
    throw ShapeError("weighted_sum: " + std::to_string(weights.size()) + " weights for tensor " +
                     shape_str(x.shape()));
  }
  const bool track = tracking(tape, {&x});
  Real total = 0;
  auto xd = x.data();
  for (std::size_t i = 0; i < xd.size(); ++i) total += weights[i] * xd[i];
  Tensor<Real> out = Tensor<Real>::scalar(total, track);
  if (track) {
    std::vector<Real> w(weights.begin(), weights.end());
    tape->record({x}, out, [x, out, w = std::move(w)]() mutable {
      const Real g = out.grad()[0];
      auto gx = x.ensure_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * w[i];
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> log_softmax(const Tensor<Real>& logits, Tape<Real>* tape) {
  require_rank(logits, 2, "log_softmax", "logits");
  const std::size_t rows = logits.dim(0), k = logits.dim(1);
  if (k < 2) throw ShapeError("log_softmax: need at least 2 classes, got " + shape_str(logits.shape()));
  auto z = logits.data();
  for (Real v : z) {
    if (!std::isfinite(v)) throw NumericError("log_softmax: non-finite logit");
  }
  const bool track = tracking(tape, {&logits});
  std::vector<Real> data(z.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* row = z.data() + r * k;
    const Real m = *std::max_element(row, row + k);
    Real s = 0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(row[j] - m);
    const Real lse = std::log(s);
    for (std::size_t j = 0; j < k; ++j) data[r * k + j] = row[j] - m - lse;
  }
  Tensor<Real> out(logits.shape(), std::move(data), track);
  if (track) {
    tape->record({logits}, out, [logits, out, rows, k]() mutable {
      auto g = out.grad();
      auto y = out.data();
      auto gz = logits.ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        Real gs = 0;
        for (std::size_t j = 0; j < k; ++j) gs += g[r * k + j];
        for (std::size_t j = 0; j < k; ++j)
          gz[r * k + j] += g[r * k + j] - std::exp(y[r * k + j]) * gs;
      }
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> softmax(const Tensor<Real>& logits, Real temperature, Tape<Real>* tape) {
  require_rank(logits, 2, "softmax", "logits");
  if (!(temperature > Real(0))) {
    throw ConfigError("softmax: temperature must be positive, got " + std::to_string(temperature));
  }
  const std::size_t rows = logits.dim(0), k = logits.dim(1);
  auto z = logits.data();
  for (Real v : z) {
    if (!std::isfinite(v)) throw NumericError("softmax: non-finite logit");
  }
  const bool track = tracking(tape, {&logits});
  std::vector<Real> data(z.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* row = z.data() + r * k;
    const Real m = *std::max_element(row, row + k);
    Real s = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const Real e = std::exp((row[j] - m) / temperature);
      data[r * k + j] = e;
      s += e;
    }
    for (std::size_t j = 0; j < k; ++j) data[r * k + j] /= s;
  }
  Tensor<Real> out(logits.shape(), std::move(data), track);
  if (track) {
    tape->record({logits}, out, [logits, out, rows, k, temperature]() mutable {
      auto g = out.grad();
      auto p = out.data();
      auto gz = logits.ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        Real dot = 0;
        for (std::size_t j = 0; j < k; ++j) dot += g[r * k + j] * p[r * k + j];
        for (std::size_t j = 0; j < k; ++j)
          gz[r * k + j] += p[r * k + j] * (g[r * k + j] - dot) / temperature;
      }
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> cross_entropy_soft(const Tensor<Real>& probs, std::span<const Real> target, Real eps,
                                Tape<Real>* tape) {
  require_rank(probs, 2, "cross_entropy_soft", "probs");
  if (target.size() != probs.size()) {
    throw ShapeError("cross_entropy_soft: target has " + std::to_string(target.size()) +
                     " entries for probabilities " + shape_str(probs.shape()));
  }
  const std::size_t rows = probs.dim(0), k = probs.dim(1);
  const bool track = tracking(tape, {&probs});
  auto p = probs.data();
  std::vector<Real> data(rows, Real(0));
  for (std::size_t r = 0; r < rows; ++r) {
    Real acc = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const Real t = target[r * k + j];
      if (t != Real(0)) acc -= t * std::log(std::max(p[r * k + j], eps));
    }
    data[r] = acc;
  }
  Tensor<Real> out({rows}, std::move(data), track);
  if (track) {
    std::vector<Real> t(target.begin(), target.end());
    tape->record({probs}, out, [probs, out, t = std::move(t), rows, k, eps]() mutable {
      auto g = out.grad();
      auto p = probs.data();
      auto gp = probs.ensure_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < k; ++j) {
          const std::size_t i = r * k + j;
          if (p[i] > eps) gp[i] -= g[r] * t[i] / p[i];
        }
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> cross_entropy_hard(const Tensor<Real>& probs, std::span<const int> labels, Real eps,
                                Tape<Real>* tape) {
  require_rank(probs, 2, "cross_entropy_hard", "probs");
  const std::size_t rows = probs.dim(0), k = probs.dim(1);
  if (labels.size() != rows) {
    throw ShapeError("cross_entropy_hard: " + std::to_string(labels.size()) + " labels for " +
                     shape_str(probs.shape()));
  }
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= k) {
      throw ContractError("cross_entropy_hard: label " + std::to_string(labels[r]) + " at row " +
                          std::to_string(r) + " outside [0," + std::to_string(k) + ")");
    }
  }
  const bool track = tracking(tape, {&probs});
  auto p = probs.data();
  std::vector<Real> data(rows);
  for (std::size_t r = 0; r < rows; ++r)
    data[r] = -std::log(std::max(p[r * k + static_cast<std::size_t>(labels[r])], eps));
  Tensor<Real> out({rows}, std::move(data), track);
  if (track) {
    std::vector<int> lab(labels.begin(), labels.end());
    tape->record({probs}, out, [probs, out, lab = std::move(lab), rows, k, eps]() mutable {
      auto g = out.grad();
      auto p = probs.data();
      auto gp = probs.ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t i = r * k + static_cast<std::size_t>(lab[r]);
        if (p[i] > eps) gp[i] -= g[r] / p[i];
      }
    });
  }
  return out;
}

#define W2S_INSTANTIATE_OPS(Real)                                                               \
  template Tensor<Real> matmul(const Tensor<Real>&, const Tensor<Real>&, Tape<Real>*);          \
  template Tensor<Real> add_bias(const Tensor<Real>&, const Tensor<Real>&, Tape<Real>*);        \
  template Tensor<Real> conv2d(const Tensor<Real>&, const Tensor<Real>&, std::size_t,           \
                               std::size_t, Tape<Real>*);                                       \
  template Tensor<Real> add_channel_bias(const Tensor<Real>&, const Tensor<Real>&, Tape<Real>*); \
  template Tensor<Real> relu(const Tensor<Real>&, Tape<Real>*);                                 \
  template Tensor<Real> reshape(const Tensor<Real>&, Shape, Tape<Real>*);                       \
  template Tensor<Real> add(const Tensor<Real>&, const Tensor<Real>&, Tape<Real>*);             \
  template Tensor<Real> mul(const Tensor<Real>&, const Tensor<Real>&, Tape<Real>*);             \
  template Tensor<Real> scale(const Tensor<Real>&, Real, Tape<Real>*);                          \
  template Tensor<Real> sum(const Tensor<Real>&, Tape<Real>*);                                  \
  template Tensor<Real> mean(const Tensor<Real>&, Tape<Real>*);                                 \
  template Tensor<Real> weighted_sum(const Tensor<Real>&, std::span<const Real>, Tape<Real>*);  \
  template Tensor<Real> log_softmax(const Tensor<Real>&, Tape<Real>*);                          \
  template Tensor<Real> softmax(const Tensor<Real>&, Real, Tape<Real>*);                        \
  template Tensor<Real> cross_entropy_soft(const Tensor<Real>&, std::span<const Real>, Real,    \
                                           Tape<Real>*);                                        \
  template Tensor<Real> cross_entropy_hard(const Tensor<Real>&, std::span<const int>, Real,     \
                                           Tape<Real>*);

W2S_INSTANTIATE_OPS(float)
W2S_INSTANTIATE_OPS(double)

#undef W2S_INSTANTIATE_OPS

}  // namespace w2s::ops
