#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cola/activation.hpp"
#include "cola/tape.hpp"

// Differentiable operations recorded on a Tape. Activations are laid out
// feature-major: a batch of n tokens of width d is a d x n matrix whose
// column b*T + t is position t of sequence b.
namespace cola::ops {

// Raw kernels, exposed for the linear-algebra helpers and tests.
// C += A * B with A: MxK, B: KxN, row-major.
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
              std::size_t n);
Tensor gemm(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
// Same value as add; additionally books both operands as retained for
// memory accounting.
Var residual_add(Var x, Var branch);
Var activation(Var x, ActivationKind kind);
// Per-column RMS normalization with a d x 1 gain.
Var rmsnorm(Var x, Var gain, double eps = 1e-6);
// Softmax over the last axis. Any rank >= 1.
Var softmax_rows(Var x);
// Causal scaled scores: Q, K are d x (B*T); result is {B, h, T, T}.
Var attention_scores(Var q, Var k, std::size_t heads, std::size_t seq_len);
// Mixes values with probabilities {B, h, T, T}; V is d x (B*T).
Var attention_mix(Var p, Var v, std::size_t heads);
// table: V x d; returns d x ids.size().
Var embedding(Var table, std::vector<std::int64_t> ids);
// Mean token cross-entropy; logits are V x n, target -1 is ignored.
Var cross_entropy(Var logits, std::vector<std::int64_t> targets);
Var transpose(Var a);
// Columns [begin, end) of a rank-2 tensor (axis 1) or rows (axis 0).
Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end);
Var concat(std::span<const Var> parts, std::size_t axis);
Var sum(Var a);

}  // namespace cola::ops
