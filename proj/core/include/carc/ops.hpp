#pragma once

#include <vector>

#include "carc/tensor.hpp"

namespace carc {

// Tape-recording tensor ops. Each returns a fresh tensor wired to its inputs;
// backward closures accumulate into parent grads.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor add_bias(const Tensor& x, const Tensor& bias);
// a + s * b, elementwise over matching shapes.
Tensor add_scaled(const Tensor& a, const Tensor& b, float s);
Tensor scale(const Tensor& a, float s);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor silu_op(const Tensor& x);
Tensor rmsnorm(const Tensor& x, const Tensor& weight, float eps = 1e-5f);
Tensor embedding(const Tensor& table, const std::vector<int>& ids);
Tensor softmax(const Tensor& x, int axis);
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor slice_rows(const Tensor& x, int row_begin, int row_end);

// Fused multi-head attention over a packed [s x 3d] QKV block. Applies rotary
// embedding to Q and K when rope_base > 0; causal masks scores to j <= i.
Tensor self_attention(const Tensor& qkv, int n_heads, bool causal, float rope_base,
                      int pos_offset = 0);

// Bidirectional attention of q rows over k/v rows (no mask, no rope).
Tensor cross_attention(const Tensor& q, const Tensor& k, const Tensor& v, int n_heads);

}  // namespace carc
