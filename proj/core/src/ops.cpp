#include "carc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "carc/kernels.hpp"

namespace carc {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shapes disagree: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out = Tensor::make_op({m, n}, {a, b});
    kernels::gemm_nn(m, k, n, a.data(), b.data(), out.data());
    if (out.requires_grad()) {
        TensorNode* o = out.node();
        Tensor pa = a, pb = b;
        o->backward_fn = [o, pa, pb, m, k, n]() mutable {
            if (pa.requires_grad()) kernels::gemm_nt(m, n, k, o->grad.data(), pb.data(), pa.grad(), true);
            if (pb.requires_grad()) kernels::gemm_tn(k, m, n, pa.data(), o->grad.data(), pb.grad(), true);
        };
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out = Tensor::make_op(a.shape(), {a, b});
    const int64_t n = a.numel();
    const float* pa = a.data();
    const float* pb = b.data();
    float* po = out.data();
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
    if (out.requires_grad()) {
        TensorNode* o = out.node();
        Tensor ta = a, tb = b;
        o->backward_fn = [o, ta, tb, n]() mutable {
            if (ta.requires_grad()) {
                float* g = ta.grad();
                for (int64_t i = 0; i < n; ++i) g[i] += o->grad[static_cast<size_t>(i)];
            }
            if (tb.requires_grad()) {
                float* g = tb.grad();
                for (int64_t i = 0; i < n; ++i) g[i] += o->grad[static_cast<size_t>(i)];
            }
        };
    }
    return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    const int n = x.dim(x.ndim() - 1);
    if (bias.ndim() != 1 || bias.dim(0) != n) {
        throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not match last dim of " +
                         shape_str(x.shape()));
    }
    const int64_t rows = x.numel() / n;
    Tensor out = Tensor::make_op(x.shape(), {x, bias});
    const float* px = x.data();
    const float* pb = bias.data();
    float* po = out.data();
    for (int64_t r = 0; r < rows; ++r) {
        for (int j = 0; j < n; ++j) po[r * n + j] = px[r * n + j] + pb[j];
    }
    if (out.requires_grad()) {
        TensorNode* o = out.node();
        Tensor tx = x, tb = bias;
        o->backward_fn = [o, tx, tb, rows, n]() mutable {
            if (tx.requires_grad()) {
                float* g = tx.grad();
                for (int64_t i = 0; i < rows * n; ++i) g[i] += o->grad[static_cast<size_t>(i)];
            }
            if (tb.requires_grad()) {
                float* g = tb.grad();
                for (int j = 0; j < n; ++j) {
                    double s = 0.0;
                    for (int64_t r = 0; r < rows; ++r) s += o->grad[static_cast<size_t>(r * n + j)];
                    g[j] += static_cast<float>(s);
                }
            }
        };
    }
    return out;
}

Tensor add_scaled(const Tensor& a, const Tensor& b, float s) {
    check_same_shape(a, b, "add_scaled");
    Tensor out = Tensor::make_op(a.shape(), {a, b});
    const int64_t n = a.numel();
    const float* pa = a.data();
    const float* pb = b.data();
    float* po = out.data();
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + s * pb[i];
    if (out.requires_grad()) {
        TensorNode* o = out.node();
        Tensor ta = a, tb = b;
        o->backward_fn = [o, ta, tb, n, s]() mutable {
            if (ta.requires_grad()) {
                float* g = ta.grad();
                for (int64_t i = 0; i < n; ++i) g[i] += o->grad[static_cast<size_t>(i)];
            }
            if (tb.requires_grad()) {
                float* g = tb.grad();
                for (int64_t i = 0; i < n; ++i) g[i] += s * o->grad[static_cast<size_t>(i)];
            }
        };
    }
    return out;
}

Tensor scale(const Tensor& a, float s) {
    Tensor out = Tensor::make_op(a.shape(), {a});
    const int64_t n = a.numel();
    const float* pa = a.data();
    float* po = out.data();
    for (int64_t i = 0; i < n; ++i) po[i] = s * pa[i];
    if (out.requires_grad()) {
        TensorNode* o = out.node();
        Tensor ta = a;
        o->backward_fn = [o, ta, n, s]() mutable {
            float* g = ta.grad();
            for (int64_t i = 0; i < n; ++i) g[i] += s * o->grad[static_cast<size_t>(i)];
        };
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor out = Tensor::make_op(a.shape(), {a, b});
    const int64_t n = a.numel();
    const float* pa = a.data();
    const float* pb = b.data();
    float* po = out.data();
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
    if (out.requires_grad()) {
        TensorNode* o = out.node();
        Tensor ta = a, tb = b;
        o->backward_fn = [o, ta, tb, n]() mutable {
            if (ta.requires_grad()) {
                float* g = ta.grad();
                const float* pb2 = tb.data();
                for (int64_t i = 0; i < n; ++i) g[i] += pb2[i] * o->grad[static_cast<size_t>(i)];
            }
            if (tb.requires_grad()) {
                float* g = tb.grad();
                const float* pa2 = ta.data();
                for (int64_t i = 0; i < n; ++i) g[i] += pa2[i] * o->grad[static_cast<size_t>(i)];
            }
        };
    }
    return out;
}

Tensor silu_op(const Tensor& x) {
    Tensor out = Tensor::make_op(x.shape(), {x});
    const int64_t n = x.numel();
    const float* px = x.data();
    float* po = out.data();
    for (int64_t i = 0; i < n; ++i) po[i] = kernels::silu(px[i]);
    if (out.requires_grad()) {
        TensorNode* o = out.node();
        Tensor tx = x;
        o->backward_fn = [o, tx, n]() mutable {
            float* g = tx.grad();
            const float* px2 = tx.data();
            for (int64_t i = 0; i < n; ++i) {
                g[i] += kernels::silu_grad(px2[i]) * o->grad[static_cast<size_t>(i)];
            }
        };
    }
    return out;
}

Tensor rmsnorm(const Tensor& x, const Tensor& weight, float eps) {
    const int d = x.dim(x.ndim() - 1);
    if (weight.ndim() != 1 || weight.dim(0) != d) {
        throw ShapeError("rmsnorm: weight " + shape_str(weight.shape()) + " does not match last dim of " +
                         shape_str(x.shape()));
    }
    const int64_t rows = x.numel() / d;
    Tensor out = Tensor::make_op(x.shape(), {x, weight});
    std::vector<float> inv(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        inv[static_cast<size_t>(r)] =
            kernels::rmsnorm_row(x.data() + r * d, weight.data(), out.data() + r * d, d, eps);
    }
    if (out.requires_grad()) {
        TensorNode* o = out.node();
        Tensor tx = x, tw = weight;
        o->backward_fn = [o, tx, tw, rows, d, inv = std::move(inv)]() mutable {
            const float* px = tx.data();
            const float* pw = tw.data();
            for (int64_t r = 0; r < rows; ++r) {
                const float* xr = px + r * d;
                const float* dy = o->grad.data() + r * d;
                const float rinv = inv[static_cast<size_t>(r)];
                if (tw.requires_grad()) {
                    float* gw = tw.grad();
                    for (int j = 0; j < d; ++j) gw[j] += dy[j] * xr[j] * rinv;
                }
                if (tx.requires_grad()) {
                    double dot = 0.0;
                    for (int j = 0; j < d; ++j) dot += static_cast<double>(dy[j]) * pw[j] * xr[j];
                    const double coeff = dot * rinv * rinv * rinv / d;
                    float* gx = tx.grad() + r * d;
                    for (int j = 0; j < d; ++j) {
                        gx[j] += static_cast<float>(dy[j] * pw[j] * rinv - xr[j] * coeff);
                    }
                }
            }
        };
    }
    return out;
}

Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
    if (table.ndim() != 2) throw ShapeError("embedding: table must be 2-D, got " + shape_str(table.shape()));
    const int vocab = table.dim(0), d = table.dim(1);
    for (int id : ids) {
        if (id < 0 || id >= vocab) {
            throw IndexError("embedding: id " + std::to_string(id) + " out of range [0," +
                             std::to_string(vocab) + ")");
        }
    }
    const int len = static_cast<int>(ids.size());
    Tensor out = Tensor::make_op({len, d}, {table});
    for (int i = 0; i < len; ++i) {
        std::memcpy(out.data() + static_cast<int64_t>(i) * d,
                    table.data() + static_cast<int64_t>(ids[static_cast<size_t>(i)]) * d,
                    sizeof(float) * static_cast<size_t>(d));
    }
    if (out.requires_grad()) {
        TensorNode* o = out.node();
        Tensor tt = table;
        o->backward_fn = [o, tt, ids, d, len]() mutable {
            float* g = tt.grad();
            for (int i = 0; i < len; ++i) {
                const float* dy = o->grad.data() + static_cast<int64_t>(i) * d;
                float* gr = g + static_cast<int64_t>(ids[static_cast<size_t>(i)]) * d;
                for (int j = 0; j < d; ++j) gr[j] += dy[j];
            }
        };
    }
    return out;
}

Tensor softmax(const Tensor& x, int axis) {
    const int nd = x.ndim();
    if (axis < 0) axis += nd;
    if (axis < 0 || axis >= nd) throw IndexError("softmax: axis out of range");
    const int n = x.dim(axis);
    int64_t inner = 1, outer = 1;
    for (int i = 0; i < nd; ++i) {
        if (i < axis) outer *= x.dim(i);
        if (i > axis) inner *= x.dim(i);
    }
    Tensor out = Tensor::make_op(x.shape(), {x});
    const float* px = x.data();
    float* po = out.data();
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
            const float* xs = px + o * n * inner + in;
            float* os = po + o * n * inner + in;
            float mx = xs[0];
            for (int i = 1; i < n; ++i) mx = std::max(mx, xs[i * inner]);
            double sum = 0.0;
            for (int i = 0; i < n; ++i) {
                const double e = std::exp(static_cast<double>(xs[i * inner]) - mx);
                os[i * inner] = static_cast<float>(e);
                sum += e;
            }
            const double invs = 1.0 / sum;
            for (int i = 0; i < n; ++i) os[i * inner] = static_cast<float>(os[i * inner] * invs);
        }
    }
    if (out.requires_grad()) {
        TensorNode* on = out.node();
        Tensor tx = x;
        on->backward_fn = [on, tx, outer, inner, n]() mutable {
            float* g = tx.grad();
            const float* p = on->data.data();
            const float* dy = on->grad.data();
            for (int64_t o = 0; o < outer; ++o) {
                for (int64_t in = 0; in < inner; ++in) {
                    const int64_t base = o * n * inner + in;
                    double dot = 0.0;
                    for (int i = 0; i < n; ++i) {
                        dot += static_cast<double>(dy[base + i * inner]) * p[base + i * inner];
                    }
                    for (int i = 0; i < n; ++i) {
                        g[base + i * inner] += static_cast<float>(
                            p[base + i * inner] * (static_cast<double>(dy[base + i * inner]) - dot));
                    }
                }
            }
        };
    }
    return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
    if (logits.ndim() != 2) {
        throw ShapeError("cross_entropy: logits must be 2-D, got " + shape_str(logits.shape()));
    }
    const int l = logits.dim(0), v = logits.dim(1);
    if (static_cast<int>(targets.size()) != l) {
        throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(l) + " rows");
    }
    for (int t : targets) {
        if (t < 0 || t >= v) {
            throw IndexError("cross_entropy: target " + std::to_string(t) + " out of range [0," +
                             std::to_string(v) + ")");
        }
    }
    Tensor out = Tensor::make_op({1}, {logits});
    std::vector<float> probs(static_cast<size_t>(l) * v);
    double total = 0.0;
    for (int i = 0; i < l; ++i) {
        const float* row = logits.data() + static_cast<int64_t>(i) * v;
        float mx = row[0];
        for (int j = 1; j < v; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < v; ++j) sum += std::exp(static_cast<double>(row[j]) - mx);
        const double lse = mx + std::log(sum);
        total += lse - row[targets[static_cast<size_t>(i)]];
        float* pr = probs.data() + static_cast<int64_t>(i) * v;
        for (int j = 0; j < v; ++j) pr[j] = static_cast<float>(std::exp(row[j] - lse));
    }
    out.data()[0] = static_cast<float>(total / l);
    if (out.requires_grad()) {
        TensorNode* o = out.node();
        Tensor tl = logits;
        o->backward_fn = [o, tl, targets, l, v, probs = std::move(probs)]() mutable {
            const float gscale = o->grad[0] / static_cast<float>(l);
            float* g = tl.grad();
            for (int i = 0; i < l; ++i) {
                const float* pr = probs.data() + static_cast<int64_t>(i) * v;
                float* gr = g + static_cast<int64_t>(i) * v;
                for (int j = 0; j < v; ++j) gr[j] += gscale * pr[j];
                gr[targets[static_cast<size_t>(i)]] -= gscale;
            }
        };
    }
    return out;
}

Tensor sum_all(const Tensor& x) {
    Tensor out = Tensor::make_op({1}, {x});
    double s = 0.0;
    const float* px = x.data();
    const int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) s += px[i];
    out.data()[0] = static_cast<float>(s);
    if (out.requires_grad()) {
        TensorNode* o = out.node();
        Tensor tx = x;
        o->backward_fn = [o, tx, n]() mutable {
            float* g = tx.grad();
            for (int64_t i = 0; i < n; ++i) g[i] += o->grad[0];
        };
    }
    return out;
}

Tensor mean_all(const Tensor& x) {
    Tensor out = sum_all(x);
    return scale(out, 1.0f / static_cast<float>(x.numel()));
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(1)) {
        throw ShapeError("concat_rows: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    const int ra = a.dim(0), rb = b.dim(0), n = a.dim(1);
    Tensor out = Tensor::make_op({ra + rb, n}, {a, b});
    std::memcpy(out.data(), a.data(), sizeof(float) * static_cast<size_t>(ra) * n);
    std::memcpy(out.data() + static_cast<int64_t>(ra) * n, b.data(),
                sizeof(float) * static_cast<size_t>(rb) * n);
    if (out.requires_grad()) {
        TensorNode* o = out.node();
        Tensor ta = a, tb = b;
        o->backward_fn = [o, ta, tb, ra, rb, n]() mutable {
            if (ta.requires_grad()) {
                float* g = ta.grad();
                for (int64_t i = 0; i < static_cast<int64_t>(ra) * n; ++i) g[i] += o->grad[static_cast<size_t>(i)];
            }
            if (tb.requires_grad()) {
                float* g = tb.grad();
                const int64_t off = static_cast<int64_t>(ra) * n;
                for (int64_t i = 0; i < static_cast<int64_t>(rb) * n; ++i) {
                    g[i] += o->grad[static_cast<size_t>(off + i)];
                }
            }
        };
    }
    return out;
}

Tensor slice_rows(const Tensor& x, int row_begin, int row_end) {
    if (x.ndim() != 2) throw ShapeError("slice_rows: input must be 2-D");
    if (row_begin < 0 || row_end > x.dim(0) || row_begin >= row_end) {
        throw IndexError("slice_rows: range [" + std::to_string(row_begin) + "," +
                         std::to_string(row_end) + ") invalid for " + shape_str(x.shape()));
    }
    const int rows = row_end - row_begin, n = x.dim(1);
    Tensor out = Tensor::make_op({rows, n}, {x});
    std::memcpy(out.data(), x.data() + static_cast<int64_t>(row_begin) * n,
                sizeof(float) * static_cast<size_t>(rows) * n);
    if (out.requires_grad()) {
        TensorNode* o = out.node();
        Tensor tx = x;
        o->backward_fn = [o, tx, row_begin, rows, n]() mutable {
            float* g = tx.grad() + static_cast<int64_t>(row_begin) * n;
            for (int64_t i = 0; i < static_cast<int64_t>(rows) * n; ++i) g[i] += o->grad[static_cast<size_t>(i)];
        };
    }
    return out;
}

namespace {

// Shared scaled-dot-product core. q: [sq x d] (post-rope), k/v: [skv x d].
// Writes probs [h x sq x skv] and out [sq x d].
void attention_forward(const float* q, const float* k, const float* v, float* probs, float* out,
                       int sq, int skv, int d, int n_heads, bool causal, int causal_offset) {
    const int dh = d / n_heads;
    const double scl = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<float> row(static_cast<size_t>(skv));
    for (int h = 0; h < n_heads; ++h) {
        float* ph = probs + static_cast<int64_t>(h) * sq * skv;
        for (int i = 0; i < sq; ++i) {
            const float* qi = q + static_cast<int64_t>(i) * d + h * dh;
            const int jmax = causal ? std::min(skv, i + causal_offset + 1) : skv;
            for (int j = 0; j < jmax; ++j) {
                const float* kj = k + static_cast<int64_t>(j) * d + h * dh;
                double s = 0.0;
                for (int t = 0; t < dh; ++t) s += static_cast<double>(qi[t]) * kj[t];
                row[static_cast<size_t>(j)] = static_cast<float>(s * scl);
            }
            kernels::softmax_row(row.data(), jmax);
            float* pr = ph + static_cast<int64_t>(i) * skv;
            for (int j = 0; j < jmax; ++j) pr[j] = row[static_cast<size_t>(j)];
            for (int j = jmax; j < skv; ++j) pr[j] = 0.0f;
            float* oi = out + static_cast<int64_t>(i) * d + h * dh;
            for (int t = 0; t < dh; ++t) {
                double s = 0.0;
                for (int j = 0; j < jmax; ++j) {
                    s += static_cast<double>(pr[j]) * v[static_cast<int64_t>(j) * d + h * dh + t];
                }
                oi[t] = static_cast<float>(s);
            }
        }
    }
}

// Gradients through the scaled-dot-product core; accumulates into dq/dk/dv.
void attention_backward(const float* q, const float* k, const float* v, const float* probs,
                        const float* dout, float* dq, float* dk, float* dv, int sq, int skv, int d,
                        int n_heads) {
    const int dh = d / n_heads;
    const double scl = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<double> ds(static_cast<size_t>(skv));
    for (int h = 0; h < n_heads; ++h) {
        const float* ph = probs + static_cast<int64_t>(h) * sq * skv;
        for (int i = 0; i < sq; ++i) {
            const float* pr = ph + static_cast<int64_t>(i) * skv;
            const float* doi = dout + static_cast<int64_t>(i) * d + h * dh;
            // dP and the softmax row correction
            double dot = 0.0;
            for (int j = 0; j < skv; ++j) {
                if (pr[j] == 0.0f) {
                    ds[static_cast<size_t>(j)] = 0.0;
                    continue;
                }
                const float* vj = v + static_cast<int64_t>(j) * d + h * dh;
                double dp = 0.0;
                for (int t = 0; t < dh; ++t) dp += static_cast<double>(doi[t]) * vj[t];
                ds[static_cast<size_t>(j)] = dp;
                dot += dp * pr[j];
            }
            for (int j = 0; j < skv; ++j) {
                if (pr[j] == 0.0f) continue;
                const double dsij = pr[j] * (ds[static_cast<size_t>(j)] - dot) * scl;
                const float* kj = k + static_cast<int64_t>(j) * d + h * dh;
                const float* qi = q + static_cast<int64_t>(i) * d + h * dh;
                float* dqi = dq + static_cast<int64_t>(i) * d + h * dh;
                float* dkj = dk + static_cast<int64_t>(j) * d + h * dh;
                float* dvj = dv + static_cast<int64_t>(j) * d + h * dh;
                const double pij = pr[j];
                for (int t = 0; t < dh; ++t) {
                    dqi[t] += static_cast<float>(dsij * kj[t]);
                    dkj[t] += static_cast<float>(dsij * qi[t]);
                    dvj[t] += static_cast<float>(pij * doi[t]);
                }
            }
        }
    }
}

}  // namespace

Tensor self_attention(const Tensor& qkv, int n_heads, bool causal, float rope_base, int pos_offset) {
    if (qkv.ndim() != 2 || qkv.dim(1) % 3 != 0) {
        throw ShapeError("self_attention: expected [s x 3d] qkv, got " + shape_str(qkv.shape()));
    }
    const int s = qkv.dim(0), d = qkv.dim(1) / 3;
    if (d % n_heads != 0) {
        throw ShapeError("self_attention: d_model " + std::to_string(d) + " not divisible by " +
                         std::to_string(n_heads) + " heads");
    }
    std::vector<float> q(static_cast<size_t>(s) * d), k(static_cast<size_t>(s) * d),
        v(static_cast<size_t>(s) * d);
    const float* src = qkv.data();
    for (int i = 0; i < s; ++i) {
        std::memcpy(q.data() + static_cast<int64_t>(i) * d, src + static_cast<int64_t>(i) * 3 * d,
                    sizeof(float) * static_cast<size_t>(d));
        std::memcpy(k.data() + static_cast<int64_t>(i) * d, src + static_cast<int64_t>(i) * 3 * d + d,
                    sizeof(float) * static_cast<size_t>(d));
        std::memcpy(v.data() + static_cast<int64_t>(i) * d, src + static_cast<int64_t>(i) * 3 * d + 2 * d,
                    sizeof(float) * static_cast<size_t>(d));
        if (rope_base > 0) {
            kernels::rope_row(q.data() + static_cast<int64_t>(i) * d, d, n_heads, pos_offset + i, rope_base);
            kernels::rope_row(k.data() + static_cast<int64_t>(i) * d, d, n_heads, pos_offset + i, rope_base);
        }
    }
    Tensor out = Tensor::make_op({s, d}, {qkv});
    std::vector<float> probs(static_cast<size_t>(n_heads) * s * s);
    attention_forward(q.data(), k.data(), v.data(), probs.data(), out.data(), s, s, d, n_heads, causal,
                      0);
    if (out.requires_grad()) {
        TensorNode* o = out.node();
        Tensor tqkv = qkv;
        o->backward_fn = [o, tqkv, q = std::move(q), k = std::move(k), v = std::move(v),
                          probs = std::move(probs), s, d, n_heads, rope_base, pos_offset]() mutable {
            std::vector<float> dq(static_cast<size_t>(s) * d, 0.0f), dk(static_cast<size_t>(s) * d, 0.0f),
                dv(static_cast<size_t>(s) * d, 0.0f);
            attention_backward(q.data(), k.data(), v.data(), probs.data(), o->grad.data(), dq.data(),
                               dk.data(), dv.data(), s, s, d, n_heads);
            float* g = tqkv.grad();
            for (int i = 0; i < s; ++i) {
                if (rope_base > 0) {
                    kernels::rope_row(dq.data() + static_cast<int64_t>(i) * d, d, n_heads, pos_offset + i,
                                      rope_base, -1);
                    kernels::rope_row(dk.data() + static_cast<int64_t>(i) * d, d, n_heads, pos_offset + i,
                                      rope_base, -1);
                }
                float* gi = g + static_cast<int64_t>(i) * 3 * d;
                const float* dqi = dq.data() + static_cast<int64_t>(i) * d;
                const float* dki = dk.data() + static_cast<int64_t>(i) * d;
                const float* dvi = dv.data() + static_cast<int64_t>(i) * d;
                for (int t = 0; t < d; ++t) {
                    gi[t] += dqi[t];
                    gi[d + t] += dki[t];
                    gi[2 * d + t] += dvi[t];
                }
            }
        };
    }
    return out;
}

Tensor cross_attention(const Tensor& q, const Tensor& k, const Tensor& v, int n_heads) {
    if (q.ndim() != 2 || k.ndim() != 2 || v.ndim() != 2 || q.dim(1) != k.dim(1) ||
        k.shape() != v.shape()) {
        throw ShapeError("cross_attention: incompatible shapes q=" + shape_str(q.shape()) +
                         " k=" + shape_str(k.shape()) + " v=" + shape_str(v.shape()));
    }
    const int sq = q.dim(0), skv = k.dim(0), d = q.dim(1);
    if (d % n_heads != 0) {
        throw ShapeError("cross_attention: d_model " + std::to_string(d) + " not divisible by " +
                         std::to_string(n_heads) + " heads");
    }
    Tensor out = Tensor::make_op({sq, d}, {q, k, v});
    std::vector<float> probs(static_cast<size_t>(n_heads) * sq * skv);
    attention_forward(q.data(), k.data(), v.data(), probs.data(), out.data(), sq, skv, d, n_heads,
                      false, 0);
    if (out.requires_grad()) {
        TensorNode* o = out.node();
        Tensor tq = q, tk = k, tv = v;
        o->backward_fn = [o, tq, tk, tv, probs = std::move(probs), sq, skv, d, n_heads]() mutable {
            std::vector<float> dq(static_cast<size_t>(sq) * d, 0.0f),
                dk(static_cast<size_t>(skv) * d, 0.0f), dv(static_cast<size_t>(skv) * d, 0.0f);
            attention_backward(tq.data(), tk.data(), tv.data(), probs.data(), o->grad.data(), dq.data(),
                               dk.data(), dv.data(), sq, skv, d, n_heads);
            if (tq.requires_grad()) {
                float* g = tq.grad();
                for (int64_t i = 0; i < static_cast<int64_t>(sq) * d; ++i) g[i] += dq[static_cast<size_t>(i)];
            }
            if (tk.requires_grad()) {
                float* g = tk.grad();
                for (int64_t i = 0; i < static_cast<int64_t>(skv) * d; ++i) g[i] += dk[static_cast<size_t>(i)];
            }
            if (tv.requires_grad()) {
                float* g = tv.grad();
                for (int64_t i = 0; i < static_cast<int64_t>(skv) * d; ++i) g[i] += dv[static_cast<size_t>(i)];
            }
        };
    }
    return out;
}

}  // namespace carc
