#pragma once

#include <span>

#include "w2s/tensor.hpp"

// Differentiable primitives. Every op records a tape node when `tape` is
// non-null and at least one input requires grad; otherwise it is a plain
// forward computation.
namespace w2s::ops {

// a[m,k] x b[k,n] -> [m,n]
template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b, Tape<Real>* tape = nullptr);

// x[N,M] + bias[M] broadcast over rows.
template <typename Real>
Tensor<Real> add_bias(const Tensor<Real>& x, const Tensor<Real>& bias, Tape<Real>* tape = nullptr);

// Cross-correlation with zero padding. input[N,C,H,W], kernel[O,C,kh,kw].
template <typename Real>
Tensor<Real> conv2d(const Tensor<Real>& input, const Tensor<Real>& kernel, std::size_t stride,
                    std::size_t pad, Tape<Real>* tape = nullptr);

// x[N,C,H,W] + bias[C] broadcast over batch and spatial positions.
template <typename Real>
Tensor<Real> add_channel_bias(const Tensor<Real>& x, const Tensor<Real>& bias,
                              Tape<Real>* tape = nullptr);

// max(0, x); the gradient at exactly 0 is 0.
template <typename Real>
Tensor<Real> relu(const Tensor<Real>& x, Tape<Real>* tape = nullptr);

template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& x, Shape shape, Tape<Real>* tape = nullptr);

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b, Tape<Real>* tape = nullptr);

template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b, Tape<Real>* tape = nullptr);

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& x, Real factor, Tape<Real>* tape = nullptr);

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& x, Tape<Real>* tape = nullptr);

template <typename Real>
Tensor<Real> mean(const Tensor<Real>& x, Tape<Real>* tape = nullptr);

// sum_i weights[i] * x[i] with constant weights; returns a scalar.
template <typename Real>
Tensor<Real> weighted_sum(const Tensor<Real>& x, std::span<const Real> weights,
                          Tape<Real>* tape = nullptr);

// Row-wise shift-stabilized log-softmax of logits[N,K], K >= 2.
template <typename Real>
Tensor<Real> log_softmax(const Tensor<Real>& logits, Tape<Real>* tape = nullptr);

// Row-wise softmax(logits / temperature).
template <typename Real>
Tensor<Real> softmax(const Tensor<Real>& logits, Real temperature, Tape<Real>* tape = nullptr);

// Per-row -sum_k target[k] * ln(max(probs[k], eps)) -> [N]. No gradient to target.
template <typename Real>
Tensor<Real> cross_entropy_soft(const Tensor<Real>& probs, std::span<const Real> target, Real eps,
                                Tape<Real>* tape = nullptr);

// Per-row -ln(max(probs[label], eps)) -> [N]. Labels carry no gradient.
template <typename Real>
Tensor<Real> cross_entropy_hard(const Tensor<Real>& probs, std::span<const int> labels, Real eps,
                                Tape<Real>* tape = nullptr);

}  // namespace w2s::ops
