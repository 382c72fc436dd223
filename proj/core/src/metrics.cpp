#include "carc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "carc/error.hpp"

namespace carc {

namespace {

void require_same_shape(const Raster& a, const Raster& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": rasters [" + std::to_string(a.h) + "x" +
                         std::to_string(a.w) + "x" + std::to_string(a.channels) + "] and [" +
                         std::to_string(b.h) + "x" + std::to_string(b.w) + "x" +
                         std::to_string(b.channels) + "] differ in shape");
}

double gray_at(const Raster& r, int y, int x) {
    if (r.channels == 1) return r.at(y, x, 0);
    return (r.at(y, x, 0) + r.at(y, x, 1) + r.at(y, x, 2)) / 3.0;
}

double luma_at(const Raster& r, int y, int x) {
    if (r.channels == 1) return r.at(y, x, 0);
    return 0.299 * r.at(y, x, 0) + 0.587 * r.at(y, x, 1) + 0.114 * r.at(y, x, 2);
}

}  // namespace

double f1_edge(const Raster& pred, const Raster& ref) {
    require_same_shape(pred, ref, "f1_edge");
    if (pred.channels != 1) throw ShapeError("f1_edge expects single-channel rasters");
    int64_t tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < pred.pix.size(); ++i) {
        bool p = pred.pix[i] != 0, r = ref.pix[i] != 0;
        tp += p && r;
        fp += p && !r;
        fn += !p && r;
    }
    if (tp + fp + fn == 0) return 1.0;  // both empty
    if (tp == 0) return 0.0;
    double prec = static_cast<double>(tp) / (tp + fp);
    double rec = static_cast<double>(tp) / (tp + fn);
    return 2.0 * prec * rec / (prec + rec);
}

double rmse(const Raster& a, const Raster& b) {
    require_same_shape(a, b, "rmse");
    double acc = 0.0;
    for (size_t i = 0; i < a.pix.size(); ++i) {
        double d = static_cast<double>(a.pix[i]) - b.pix[i];
        acc += d * d;
    }
    return std::sqrt(acc / a.pix.size());
}

double ssim(const Raster& a, const Raster& b) {
    require_same_shape(a, b, "ssim");
    if (a.channels != 1) throw ShapeError("ssim expects single-channel rasters");
    constexpr int win = 8;
    if (a.h < win || a.w < win)
        throw ShapeError("ssim needs rasters of at least " + std::to_string(win) + "x" +
                         std::to_string(win));
    constexpr double c1 = (0.01 * 255) * (0.01 * 255);
    constexpr double c2 = (0.03 * 255) * (0.03 * 255);
    double total = 0.0;
    int64_t windows = 0;
    for (int y = 0; y + win <= a.h; ++y)
        for (int x = 0; x + win <= a.w; ++x) {
            double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
            for (int i = 0; i < win; ++i)
                for (int j = 0; j < win; ++j) {
                    double va = a.at(y + i, x + j, 0);
                    double vb = b.at(y + i, x + j, 0);
                    sa += va;
                    sb += vb;
                    saa += va * va;
                    sbb += vb * vb;
                    sab += va * vb;
                }
            constexpr double n = win * win;
            double ma = sa / n, mb = sb / n;
            double va = saa / n - ma * ma;
            double vb = sbb / n - mb * mb;
            double cov = sab / n - ma * mb;
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                     ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++windows;
        }
    return total / windows;
}

double miou(const Raster& pred, const Raster& ref, int n_classes) {
    require_same_shape(pred, ref, "miou");
    if (pred.channels != 1) throw ShapeError("miou expects single-channel id rasters");
    if (n_classes < 1) throw ConfigError("miou needs at least one class");
    std::vector<int64_t> inter(n_classes, 0), pred_n(n_classes, 0), ref_n(n_classes, 0);
    for (size_t i = 0; i < pred.pix.size(); ++i) {
        int p = pred.pix[i], r = ref.pix[i];
        if (p >= n_classes || r >= n_classes)
            throw IndexError("miou: id " + std::to_string(std::max(p, r)) +
                             " outside the " + std::to_string(n_classes) + "-class range");
        ++pred_n[p];
        ++ref_n[r];
        inter[p] += p == r;
    }
    double total = 0.0;
    int present = 0;
    for (int c = 0; c < n_classes; ++c) {
        if (ref_n[c] == 0) continue;
        int64_t uni = pred_n[c] + ref_n[c] - inter[c];
        total += static_cast<double>(inter[c]) / uni;
        ++present;
    }
    return total / present;  // ref always has at least one class present
}

Raster edges_from_raster(const Raster& img) {
    Raster out(img.h, img.w, 1);
    auto differs = [&](int y0, int x0, int y1, int x1) {
        for (int c = 0; c < img.channels; ++c)
            if (img.at(y0, x0, c) != img.at(y1, x1, c)) return true;
        return false;
    };
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            bool hit = (y > 0 && differs(y, x, y - 1, x)) ||
                       (y + 1 < img.h && differs(y, x, y + 1, x)) ||
                       (x > 0 && differs(y, x, y, x - 1)) ||
                       (x + 1 < img.w && differs(y, x, y, x + 1));
            out.at(y, x, 0) = hit ? 255 : 0;
        }
    return out;
}

void jacobi_eig(std::vector<double> m, int n, std::vector<double>& evals,
                std::vector<double>& evecs) {
    if (static_cast<int>(m.size()) != n * n) throw ShapeError("jacobi_eig: matrix size mismatch");
    evecs.assign(n * n, 0.0);
    for (int i = 0; i < n; ++i) evecs[i * n + i] = 1.0;
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += m[p * n + q] * m[p * n + q];
        if (off < 1e-26) break;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                double apq = m[p * n + q];
                if (apq == 0.0) continue;
                double theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int k = 0; k < n; ++k) {
                    double mkp = m[k * n + p], mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for (int k = 0; k < n; ++k) {
                    double mpk = m[p * n + k], mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for (int k = 0; k < n; ++k) {
                    double vkp = evecs[k * n + p], vkq = evecs[k * n + q];
                    evecs[k * n + p] = c * vkp - s * vkq;
                    evecs[k * n + q] = s * vkp + c * vkq;
                }
            }
    }
    evals.resize(n);
    for (int i = 0; i < n; ++i) evals[i] = m[i * n + i];
    // sort ascending, carrying eigenvector columns along
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) { return evals[a] < evals[b]; });
    std::vector<double> se(n), sv(n * n);
    for (int i = 0; i < n; ++i) {
        se[i] = evals[order[i]];
        for (int k = 0; k < n; ++k) sv[k * n + i] = evecs[k * n + order[i]];
    }
    evals = std::move(se);
    evecs = std::move(sv);
}

std::array<double, kFrechetDim> frechet_features(const Raster& img) {
    std::array<double, kFrechetDim> f{};
    double n = static_cast<double>(img.h) * img.w;
    double sum_gray = 0.0, sum_gray2 = 0.0;
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            for (int c = 0; c < 3; ++c)
                f[c] += img.at(y, x, img.channels == 1 ? 0 : c);
            double g = gray_at(img, y, x);
            sum_gray += g;
            sum_gray2 += g * g;
        }
    for (int c = 0; c < 3; ++c) f[c] /= n;
    double mg = sum_gray / n;
    f[3] = std::sqrt(std::max(0.0, sum_gray2 / n - mg * mg));

    Raster edges = edges_from_raster(img);
    int64_t on = 0;
    for (uint8_t v : edges.pix) on += v != 0;
    f[4] = static_cast<double>(on) / n;

    int ph = img.h / 4, pw = img.w / 4;
    if (ph == 0 || pw == 0) throw ShapeError("frechet_features needs rasters of at least 4x4");
    double ps = 0.0, ps2 = 0.0;
    for (int by = 0; by < ph; ++by)
        for (int bx = 0; bx < pw; ++bx) {
            double acc = 0.0;
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j) acc += luma_at(img, by * 4 + i, bx * 4 + j);
            acc /= 16.0;
            ps += acc;
            ps2 += acc * acc;
        }
    double pn = static_cast<double>(ph) * pw;
    double pm = ps / pn;
    f[5] = pm;
    f[6] = std::sqrt(std::max(0.0, ps2 / pn - pm * pm));
    return f;
}

namespace {

constexpr int kD = kFrechetDim;

struct Gaussian {
    std::array<double, kD> mu{};
    std::vector<double> sigma;  // kD x kD
};

Gaussian fit_gaussian(const std::vector<std::array<double, kD>>& xs) {
    Gaussian g;
    g.sigma.assign(kD * kD, 0.0);
    double n = static_cast<double>(xs.size());
    for (const auto& x : xs)
        for (int i = 0; i < kD; ++i) g.mu[i] += x[i];
    for (int i = 0; i < kD; ++i) g.mu[i] /= n;
    for (const auto& x : xs)
        for (int i = 0; i < kD; ++i)
            for (int j = 0; j < kD; ++j)
                g.sigma[i * kD + j] += (x[i] - g.mu[i]) * (x[j] - g.mu[j]);
    for (double& v : g.sigma) v /= n;
    for (int i = 0; i < kD; ++i) g.sigma[i * kD + i] += 1e-6;
    return g;
}

// V f(D) V^T for a symmetric matrix given its eigendecomposition
std::vector<double> eig_apply(const std::vector<double>& evals, const std::vector<double>& evecs,
                              double (*fn)(double)) {
    std::vector<double> out(kD * kD, 0.0);
    for (int k = 0; k < kD; ++k) {
        double fv = fn(std::max(0.0, evals[k]));
        for (int i = 0; i < kD; ++i)
            for (int j = 0; j < kD; ++j)
                out[i * kD + j] += fv * evecs[i * kD + k] * evecs[j * kD + k];
    }
    return out;
}

std::vector<double> matmul_d(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> out(kD * kD, 0.0);
    for (int i = 0; i < kD; ++i)
        for (int k = 0; k < kD; ++k) {
            double v = a[i * kD + k];
            for (int j = 0; j < kD; ++j) out[i * kD + j] += v * b[k * kD + j];
        }
    return out;
}

}  // namespace

double frechet_from_features(const std::vector<std::array<double, kFrechetDim>>& a,
                             const std::vector<std::array<double, kFrechetDim>>& b) {
    if (a.size() < 2 || b.size() < 2)
        throw ConfigError("frechet needs at least 2 samples per set, got " +
                          std::to_string(a.size()) + " and " + std::to_string(b.size()));
    Gaussian ga = fit_gaussian(a), gb = fit_gaussian(b);

    std::vector<double> evals, evecs;
    jacobi_eig(ga.sigma, kD, evals, evecs);
    auto sqrt_a = eig_apply(evals, evecs, [](double v) { return std::sqrt(v); });

    // tr((Sa Sb)^{1/2}) == tr((sqrt(Sa) Sb sqrt(Sa))^{1/2}), and the latter is
    // symmetric so the Jacobi solver applies.
    auto mid = matmul_d(matmul_d(sqrt_a, gb.sigma), sqrt_a);
    for (int i = 0; i < kD; ++i)  // symmetrize away round-off
        for (int j = i + 1; j < kD; ++j) {
            double v = 0.5 * (mid[i * kD + j] + mid[j * kD + i]);
            mid[i * kD + j] = mid[j * kD + i] = v;
        }
    jacobi_eig(mid, kD, evals, evecs);
    double tr_sqrt = 0.0;
    for (double v : evals) tr_sqrt += std::sqrt(std::max(0.0, v));

    double dist = 0.0;
    for (int i = 0; i < kD; ++i) {
        double d = ga.mu[i] - gb.mu[i];
        dist += d * d;
        dist += ga.sigma[i * kD + i] + gb.sigma[i * kD + i];
    }
    dist -= 2.0 * tr_sqrt;
    return std::max(0.0, dist);
}

double frechet_surrogate(const std::vector<Raster>& a, const std::vector<Raster>& b) {
    std::vector<std::array<double, kFrechetDim>> fa, fb;
    fa.reserve(a.size());
    fb.reserve(b.size());
    for (const auto& r : a) fa.push_back(frechet_features(r));
    for (const auto& r : b) fb.push_back(frechet_features(r));
    return frechet_from_features(fa, fb);
}

}  // namespace carc
