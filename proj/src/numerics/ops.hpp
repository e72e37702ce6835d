// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "numerics/rng.hpp"
#include "numerics/tape.hpp"

namespace cl4ac::nn {

// Differentiable operations. Each records its adjoint on the tape when any
// input requires a gradient. Instantiated for float and double.

// a + b, where b has the shape of a or a trailing suffix of it (broadcast).
template <typename T> Var add(Tape<T>& tape, Var a, Var b);
template <typename T> Var mul(Tape<T>& tape, Var a, Var b);
template <typename T> Var scale(Tape<T>& tape, Var a, T factor);
template <typename T> Var sum(Tape<T>& tape, Var a);
template <typename T> Var mean(Tape<T>& tape, Var a);

// [M x K] * [K x N].
template <typename T> Var matmul(Tape<T>& tape, Var a, Var b);
// x[..., in] * w[in, out] + b[out]. Leading dims are flattened.
template <typename T> Var linear(Tape<T>& tape, Var x, Var w, std::optional<Var> b);

template <typename T> Var relu(Tape<T>& tape, Var x);
template <typename T> Var sigmoid(Tape<T>& tape, Var x);
// Natural log; non-positive input is a domain error.
template <typename T> Var log(Tape<T>& tape, Var x);
template <typename T> Var softmax(Tape<T>& tape, Var x, std::size_t axis);

// Normalizes each row over the last axis.
template <typename T>
Var layer_norm(Tape<T>& tape, Var x, Var gamma, Var beta, double eps = 1e-5);

// x is [B, C, ...]. In training mode normalizes with batch statistics and
// updates the running buffers; in eval mode uses the running buffers.
template <typename T>
Var batch_norm(Tape<T>& tape, Var x, Var gamma, Var beta, Parameter<T>& running_mean,
               Parameter<T>& running_var, bool train, double momentum = 0.1, double eps = 1e-5);

// 3x3 convolution, stride 1, zero "same" padding, no bias.
// x is [C_in, H, W] or [B, C_in, H, W]; kernels are [C_out, C_in, 3, 3].
template <typename T> Var conv2d(Tape<T>& tape, Var x, Var kernels);

// 2x2 average pooling with stride 2 over the last two axes (floor).
template <typename T> Var avg_pool_2x2(Tape<T>& tape, Var x);

// Mean over one axis; the axis is removed from the shape.
template <typename T> Var global_mean(Tape<T>& tape, Var x, std::size_t axis);

// [..., A, B] -> [..., B, A].
template <typename T> Var swap_last_two(Tape<T>& tape, Var x);
template <typename T> Var reshape(Tape<T>& tape, Var x, Shape shape);

// Rows of table[V, D] selected by ids; result [ids.size(), D].
template <typename T> Var embedding_lookup(Tape<T>& tape, Var table, std::span<const int> ids);

// Inverted dropout. Identity (the same Var) when !train or rate == 0.
template <typename T> Var dropout(Tape<T>& tape, Var x, double rate, Rng* rng, bool train);

// Rows of x viewed as [N, D] where D is the last extent; result [k, D].
template <typename T> Var select_rows(Tape<T>& tape, Var x, std::span<const std::size_t> rows);

struct AttentionMask {
  std::size_t batch = 0;
  std::size_t queries = 0;
  std::size_t keys = 0;
  std::vector<std::uint8_t> allowed;  // [batch][queries][keys]

  bool at(std::size_t b, std::size_t i, std::size_t j) const {
    return allowed[(b * queries + i) * keys + j] != 0;
  }

  // Query i sees key j iff j <= i and j < lengths[b] (all keys if lengths empty).
  static AttentionMask causal(std::size_t batch, std::size_t len,
                              std::span<const std::size_t> lengths = {});
  // Query i sees key j iff j < lengths[b].
  static AttentionMask key_lengths(std::size_t queries, std::size_t keys,
                                   std::span<const std::size_t> lengths);
};

// Multi-head scaled dot-product attention. q is [B, m, D] (or [m, D]); k and
// v are [B, n, D]. Each head uses D/heads columns and scores scaled by
// 1/sqrt(D/heads). A null mask allows every key. A query row with no allowed
// key is a domain error.
template <typename T>
Var attention(Tape<T>& tape, Var q, Var k, Var v, std::size_t heads, const AttentionMask* mask);

// Per-group token cross entropy. logits is [N, V]; rows with target < 0 or
// group < 0 are ignored; result [groups] holds the mean of -log softmax over
// each group's rows. A group without rows is a contract error unless
// allow_empty is set, in which case it holds 0. Rows whose group receives an
// exactly zero upstream gradient are skipped in backward.
template <typename T>
Var sequence_cross_entropy(Tape<T>& tape, Var logits, std::span<const int> targets,
                           std::span<const int> groups, std::size_t n_groups,
                           bool allow_empty = false);

// -[y ln p + (1-y) ln(1-p)] elementwise; p outside (0, 1) is a domain error.
template <typename T>
Var binary_cross_entropy(Tape<T>& tape, Var p, std::span<const int> labels);

// Same value as binary_cross_entropy(sigmoid(s)) computed stably from logits.
template <typename T>
Var binary_cross_entropy_with_logits(Tape<T>& tape, Var logits, std::span<const int> labels);

// mean_b((1 - y_b) * ce_b + cl_b). The ce term of an example with y_b = 1
// is excluded from the sum and receives no gradient. Either term may be absent.
template <typename T>
Var gated_objective(Tape<T>& tape, std::optional<Var> ce, std::optional<Var> cl,
                    std::span<const int> labels);

namespace debug {
// Fault injection for the gradient-check harness: the named op's backward
// pass scales its input gradient by 0.5. Empty name clears; an unknown name
// is an InputError.
void inject_fault(const std::string& op);
const std::vector<std::string>& fault_ops();
const std::string& injected_fault();
}  // namespace debug

}  // namespace cl4ac::nn
