#include "carc/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace carc::kernels {

namespace {

// Shared row accumulator so hot loops never allocate.
thread_local std::vector<double> tls_acc;

double* acc_buffer(int n) {
    if (static_cast<int>(tls_acc.size()) < n) tls_acc.resize(static_cast<size_t>(n));
    return tls_acc.data();
}

}  // namespace

void gemm_nn(int m, int k, int n, const float* a, const float* b, float* c, bool acc) {
    double* row = acc_buffer(n);
    for (int i = 0; i < m; ++i) {
        if (acc) {
            const float* ci = c + static_cast<int64_t>(i) * n;
            for (int j = 0; j < n; ++j) row[j] = ci[j];
        } else {
            std::fill(row, row + n, 0.0);
        }
        const float* ai = a + static_cast<int64_t>(i) * k;
        for (int t = 0; t < k; ++t) {
            const double av = ai[t];
            const float* bt = b + static_cast<int64_t>(t) * n;
            for (int j = 0; j < n; ++j) row[j] += av * bt[j];
        }
        float* ci = c + static_cast<int64_t>(i) * n;
        for (int j = 0; j < n; ++j) ci[j] = static_cast<float>(row[j]);
    }
}

void gemm_nt(int m, int k, int n, const float* a, const float* b, float* c, bool acc) {
    // Four independent accumulator lanes break the float64 add dependency
    // chain; the lane sums combine in float64 as well.
    for (int i = 0; i < m; ++i) {
        const float* ai = a + static_cast<int64_t>(i) * k;
        float* ci = c + static_cast<int64_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const float* bj = b + static_cast<int64_t>(j) * k;
            double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
            int t = 0;
            for (; t + 4 <= k; t += 4) {
                s0 += static_cast<double>(ai[t]) * bj[t];
                s1 += static_cast<double>(ai[t + 1]) * bj[t + 1];
                s2 += static_cast<double>(ai[t + 2]) * bj[t + 2];
                s3 += static_cast<double>(ai[t + 3]) * bj[t + 3];
            }
            for (; t < k; ++t) s0 += static_cast<double>(ai[t]) * bj[t];
            const double s = (s0 + s1) + (s2 + s3);
            ci[j] = acc ? ci[j] + static_cast<float>(s) : static_cast<float>(s);
        }
    }
}

void gemm_tn(int m, int k, int n, const float* a, const float* b, float* c, bool acc) {
    // Outer-product order over the shared k dimension; accumulate the whole
    // m x n block in float64 scratch, round once.
    thread_local std::vector<double> scratch;
    const size_t need = static_cast<size_t>(m) * n;
    if (scratch.size() < need) scratch.resize(need);
    std::fill(scratch.begin(), scratch.begin() + static_cast<int64_t>(need), 0.0);
    for (int t = 0; t < k; ++t) {
        const float* at = a + static_cast<int64_t>(t) * m;
        const float* bt = b + static_cast<int64_t>(t) * n;
        for (int i = 0; i < m; ++i) {
            const double av = at[i];
            double* si = scratch.data() + static_cast<int64_t>(i) * n;
            for (int j = 0; j < n; ++j) si[j] += av * bt[j];
        }
    }
    for (int64_t i = 0; i < static_cast<int64_t>(need); ++i) {
        c[i] = acc ? c[i] + static_cast<float>(scratch[i]) : static_cast<float>(scratch[i]);
    }
}

void matvec(int m, int n, const float* x, const float* w, float* y, bool acc) {
    double* row = acc_buffer(n);
    if (acc) {
        for (int j = 0; j < n; ++j) row[j] = y[j];
    } else {
        std::fill(row, row + n, 0.0);
    }
    for (int i = 0; i < m; ++i) {
        const double xv = x[i];
        const float* wi = w + static_cast<int64_t>(i) * n;
        for (int j = 0; j < n; ++j) row[j] += xv * wi[j];
    }
    for (int j = 0; j < n; ++j) y[j] = static_cast<float>(row[j]);
}

float rmsnorm_row(const float* x, const float* w, float* y, int n, float eps) {
    double ss = 0.0;
    for (int i = 0; i < n; ++i) ss += static_cast<double>(x[i]) * x[i];
    const float inv = static_cast<float>(1.0 / std::sqrt(ss / n + eps));
    for (int i = 0; i < n; ++i) y[i] = x[i] * inv * w[i];
    return inv;
}

void softmax_row(float* x, int n) {
    float mx = x[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const double e = std::exp(static_cast<double>(x[i]) - mx);
        x[i] = static_cast<float>(e);
        sum += e;
    }
    const double inv = 1.0 / sum;
    for (int i = 0; i < n; ++i) x[i] = static_cast<float>(x[i] * inv);
}

float silu(float x) {
    const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(x)));
    return static_cast<float>(x * s);
}

float silu_grad(float x) {
    const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(x)));
    return static_cast<float>(s * (1.0 + x * (1.0 - s)));
}

void rope_row(float* x, int d_model, int n_heads, int pos, float base, int dir) {
    const int d_head = d_model / n_heads;
    const int half = d_head / 2;
    for (int j = 0; j < half; ++j) {
        const double freq = std::pow(static_cast<double>(base), -2.0 * j / d_head);
        const double angle = dir * pos * freq;
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        for (int h = 0; h < n_heads; ++h) {
            float* xh = x + h * d_head;
            const double x0 = xh[2 * j];
            const double x1 = xh[2 * j + 1];
            xh[2 * j] = static_cast<float>(x0 * c - x1 * s);
            xh[2 * j + 1] = static_cast<float>(x0 * s + x1 * c);
        }
    }
}

}  // namespace carc::kernels
