#pragma once

#include <array>
#include <vector>

#include "picg/autodiff.hpp"

namespace picg {

// Differentiable ops over Vars. Each builds one graph node; backward
// closures own whatever intermediate state they need.

Var add(const Var& a, const Var& b);
Var add_const(const Var& a, Tensor c);  // c participates as a constant
Var scale(const Var& a, double s);

// x[m,in] * W[out,in]^T + b -> [m,out]
Var linear(const Var& x, const Var& weight, const Var& bias);

Var matmul(const Var& a, const Var& b);     // [m,k]x[k,n]
Var matmul_nt(const Var& a, const Var& b);  // [m,k]x[n,k]^T

Var row_softmax(const Var& a);
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
Var relu(const Var& a);
Var gelu(const Var& a);

// Gathers rows of the embedding table for each id.
Var embedding_rows(const Var& table, const std::vector<int>& ids);

Var slice_rows(const Var& a, int64_t r0, int64_t r1);
Var slice_cols(const Var& a, int64_t c0, int64_t c1);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var reshape(const Var& a, std::vector<int64_t> shape);

// Mean next-token cross-entropy over supervised positions. logits[m,V];
// targets[m] ids; supervised[m] flags. Zero supervised positions yield a
// zero loss with no gradient.
Var cross_entropy_mean(const Var& logits, const std::vector<int>& targets,
                       const std::vector<char>& supervised);

// -w_label * (1 - p_label)^gamma * ln(p_label) for one sample; logits [1,C].
Var focal_loss_op(const Var& logits, int label_index, const std::vector<double>& class_weights,
                  double gamma);

// KL(p || softmax(z / temperature)) with p a fixed probability vector.
// Gradient flows into z only.
Var kl_from_teacher(const std::vector<double>& p, const Var& z, double temperature);

// x[C,D,H,W] conv with weight[OC,C,kd,kh,kw], bias[OC]; explicit stride and
// zero padding per axis. im2col + gemm inside.
Var conv3d(const Var& x, const Var& weight, const Var& bias, std::array<int, 3> stride,
           std::array<int, 3> pad);

// Non-overlapping max pooling, kernel == stride.
Var maxpool3d(const Var& x, std::array<int, 3> kernel);

Var global_mean_pool(const Var& x);  // [C,D,H,W] -> [1,C]

// Plain softmax of a value row vector (no graph), for inference paths.
std::vector<double> softmax_values(const double* logits, int n, double temperature = 1.0);

}  // namespace picg
