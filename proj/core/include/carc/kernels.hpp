#pragma once

#include <cstdint>
#include <vector>

namespace carc::kernels {

// Dense float32 GEMM/GEMV primitives. Every dot product accumulates in
// float64 and rounds once on store; `acc` adds into C instead of overwriting.

// C[m x n] = A[m x k] * B[k x n]
void gemm_nn(int m, int k, int n, const float* a, const float* b, float* c, bool acc = false);
// C[m x n] = A[m x k] * B[n x k]^T
void gemm_nt(int m, int k, int n, const float* a, const float* b, float* c, bool acc = false);
// C[m x n] = A[k x m]^T * B[k x n]
void gemm_tn(int m, int k, int n, const float* a, const float* b, float* c, bool acc = false);

// y[n] = x[m] * W[m x n]  (row vector times matrix)
void matvec(int m, int n, const float* x, const float* w, float* y, bool acc = false);

// Row-wise RMS normalization: y = x * w / rms(x), rms = sqrt(mean(x^2) + eps).
// Returns 1/rms for the row (needed by the backward pass).
float rmsnorm_row(const float* x, const float* w, float* y, int n, float eps);

// In-place numerically stabilized softmax over x[0..n). 64-bit sum.
void softmax_row(float* x, int n);

float silu(float x);
float silu_grad(float x);

// Rotary embedding over one row of head-split features: rotates pairs
// (2j, 2j+1) inside each head by pos * base^(-2j/d_head). dir=-1 inverts.
void rope_row(float* x, int d_model, int n_heads, int pos, float base, int dir = 1);

}  // namespace carc::kernels
