#pragma once

#include <cstddef>
#include <vector>

#include "milfd/tape.hpp"

namespace milfd {

// Differentiable operations. Each records one node on the tape of its inputs
// and implements its backward pass analytically.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double factor);
// Elementwise product.
Var hadamard(Var a, Var b);
// Elementwise a + c with a constant matrix (no gradient to c).
Var add_constant(Var a, const Matrix& c);

Var relu(Var a);
Var tanh(Var a);
Var sigmoid(Var a);

Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);

// Softmax down each column, stabilised by per-column max subtraction.
Var softmax_columns(Var m);

// 1-D convolution along the column (time) axis with zero padding of
// dilation * (k - 1) / 2 on each side, so T is preserved.
// kernel is D_out x (D_in * k); tap j of input channel i lives at column i * k + j.
Var conv1d_dilated(Var x, Var kernel, std::size_t kernel_size, std::size_t dilation);

// Max over columns: D x T -> D x 1. Ties route gradient to the first index.
Var maxpool_time(Var m);
// Mean over columns: D x T -> D x 1.
Var meanpool_time(Var m);

// Identity forward; backward multiplies the incoming gradient by -alpha.
Var gradient_reversal(Var m, double alpha);
// Identity forward, no gradient flows back.
Var stop_gradient(Var m);

inline constexpr double kChannelNormEps = 1e-5;

// Normalizes each row of x (D x T) to zero mean and unit variance over T,
// then applies per-row scale and shift (both D x 1).
Var channel_norm(Var x, Var scale, Var shift, double eps = kChannelNormEps);

// Normalizes each column of x (D x T) to zero mean and unit variance across
// its D rows, then applies per-row scale and shift (both D x 1). Each output
// frame depends only on the same input frame.
Var frame_norm(Var x, Var scale, Var shift, double eps = kChannelNormEps);

Var sum(Var m);

// Scalar losses (1x1 results).
Var binary_cross_entropy(Var logit, int label);
Var cross_entropy(Var logits, std::size_t target_class);
Var l1_norm(Var v);

}  // namespace milfd
