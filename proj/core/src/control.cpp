#include "carc/control.hpp"

#include <cmath>

#include "carc/ops.hpp"
#include "carc/palette.hpp"

namespace carc {

std::string control_kind_name(ControlKind k) {
    switch (k) {
        case ControlKind::edge: return "edge";
        case ControlKind::segmentation: return "seg";
        case ControlKind::depth: return "depth";
        case ControlKind::resolution_map: return "resmap";
    }
    throw ConfigError("unknown control kind");
}

ControlKind control_kind_from_string(const std::string& s) {
    if (s == "edge") return ControlKind::edge;
    if (s == "seg" || s == "segmentation") return ControlKind::segmentation;
    if (s == "depth") return ControlKind::depth;
    if (s == "resmap" || s == "resolution") return ControlKind::resolution_map;
    throw ConfigError("unknown control kind \"" + s + "\" (expected edge|seg|depth|resmap)");
}

void validate_control(const ControlImage& img) {
    const Raster& r = img.raster;
    if (r.h % kPatch != 0 || r.w % kPatch != 0) {
        throw ShapeError("control image dims " + std::to_string(r.h) + "x" + std::to_string(r.w) +
                         " not multiples of " + std::to_string(kPatch));
    }
    if (img.maxval < 1 || img.maxval > 255) {
        throw ConfigError("control image maxval " + std::to_string(img.maxval) + " outside [1,255]");
    }
    if (img.kind != ControlKind::edge && r.channels != 1) {
        throw ShapeError(control_kind_name(img.kind) + " control must be single-channel");
    }
    if (img.kind == ControlKind::edge) {
        for (uint8_t p : r.pix) {
            if (p != 0 && p != img.maxval) {
                throw ConfigError("edge control must be binary {0," + std::to_string(img.maxval) + "}");
            }
        }
    }
}

int EncoderConfig::patch_dim() const { return kPatch * kPatch * in_channels; }

void EncoderConfig::validate() const {
    if (d_e < 4 || d_e % 4 != 0) throw ConfigError("encoder d_e must be a positive multiple of 4");
    if (n_heads < 1 || d_e % n_heads != 0) {
        throw ConfigError("encoder d_e " + std::to_string(d_e) + " not divisible by " +
                          std::to_string(n_heads) + " heads");
    }
    if (n_layers < 0) throw ConfigError("encoder n_layers must be >= 0");
    if (mlp_ratio < 1) throw ConfigError("encoder mlp_ratio must be >= 1");
    if (in_channels != 1 && in_channels != 3) throw ConfigError("encoder in_channels must be 1 or 3");
}

Tensor patchify(const ControlImage& img) {
    validate_control(img);
    const Raster& r = img.raster;
    const int rows = r.h / kPatch, cols = r.w / kPatch, ch = r.channels;
    const int pdim = kPatch * kPatch * ch;
    Tensor out = Tensor::zeros({rows * cols, pdim});
    const float inv = 1.0f / static_cast<float>(img.maxval);
    float* po = out.data();
    for (int gr = 0; gr < rows; ++gr) {
        for (int gc = 0; gc < cols; ++gc) {
            float* patch = po + static_cast<int64_t>(gr * cols + gc) * pdim;
            int t = 0;
            for (int y = 0; y < kPatch; ++y) {
                for (int x = 0; x < kPatch; ++x) {
                    for (int c = 0; c < ch; ++c) {
                        patch[t++] = r.at(gr * kPatch + y, gc * kPatch + x, c) * inv;
                    }
                }
            }
        }
    }
    return out;
}

Tensor sinusoidal_pe_2d(int rows, int cols, int d) {
    if (d % 4 != 0) throw ShapeError("sinusoidal_pe_2d: d must be a multiple of 4");
    Tensor pe = Tensor::zeros({rows * cols, d});
    const int half = d / 2;
    const int pairs = half / 2;
    float* p = pe.data();
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            float* v = p + static_cast<int64_t>(r * cols + c) * d;
            for (int j = 0; j < pairs; ++j) {
                const double freq = std::pow(10000.0, -2.0 * j / half);
                v[2 * j] = static_cast<float>(std::sin(r * freq));
                v[2 * j + 1] = static_cast<float>(std::cos(r * freq));
                v[half + 2 * j] = static_cast<float>(std::sin(c * freq));
                v[half + 2 * j + 1] = static_cast<float>(std::cos(c * freq));
            }
        }
    }
    return pe;
}

Encoder Encoder::init(const EncoderConfig& cfg, Rng& rng) {
    cfg.validate();
    Encoder enc;
    enc.cfg = cfg;
    Rng r = rng.fork("encoder-init");
    const float s = 0.02f;
    enc.patch_w = Tensor::randn({cfg.patch_dim(), cfg.d_e}, r, s);
    enc.patch_b = Tensor::zeros({cfg.d_e});
    const int mlp = cfg.d_e * cfg.mlp_ratio;
    for (int i = 0; i < cfg.n_layers; ++i) {
        EncoderLayer l;
        l.attn_norm_w = Tensor::full({cfg.d_e}, 1.0f);
        l.wqkv = Tensor::randn({cfg.d_e, 3 * cfg.d_e}, r, s);
        l.wo = Tensor::zeros({cfg.d_e, cfg.d_e});  // residual branches start silent
        l.mlp_norm_w = Tensor::full({cfg.d_e}, 1.0f);
        l.w1 = Tensor::randn({cfg.d_e, mlp}, r, s);
        l.w2 = Tensor::zeros({mlp, cfg.d_e});
        enc.layers.push_back(std::move(l));
    }
    return enc;
}

Tensor Encoder::forward(const ControlImage& img) const {
    if (img.raster.channels != cfg.in_channels) {
        throw ConfigError("encoder expects " + std::to_string(cfg.in_channels) +
                          "-channel controls, got " + std::to_string(img.raster.channels));
    }
    Tensor patches = patchify(img);
    const int rows = img.raster.h / kPatch, cols = img.raster.w / kPatch;
    Tensor x = add(add_bias(matmul(patches, patch_w), patch_b), sinusoidal_pe_2d(rows, cols, cfg.d_e));
    for (const EncoderLayer& l : layers) {
        Tensor att = self_attention(matmul(rmsnorm(x, l.attn_norm_w), l.wqkv), cfg.n_heads,
                                    /*causal=*/false, /*rope_base=*/0.0f);
        x = add(x, matmul(att, l.wo));
        Tensor h = silu_op(matmul(rmsnorm(x, l.mlp_norm_w), l.w1));
        x = add(x, matmul(h, l.w2));
    }
    return x;
}

ControlTokens Encoder::encode(const ControlImage& img) const {
    ControlTokens out;
    out.source_rows = img.raster.h / kPatch;
    out.source_cols = img.raster.w / kPatch;
    out.data = forward(img);
    return out;
}

void Encoder::collect_params(std::vector<std::pair<std::string, Tensor>>& out) const {
    out.emplace_back("enc.patch.w", patch_w);
    out.emplace_back("enc.patch.b", patch_b);
    for (size_t i = 0; i < layers.size(); ++i) {
        const std::string p = "enc.layer" + std::to_string(i) + ".";
        out.emplace_back(p + "attn_norm.w", layers[i].attn_norm_w);
        out.emplace_back(p + "attn.wqkv", layers[i].wqkv);
        out.emplace_back(p + "attn.wo", layers[i].wo);
        out.emplace_back(p + "mlp_norm.w", layers[i].mlp_norm_w);
        out.emplace_back(p + "mlp.w1", layers[i].w1);
        out.emplace_back(p + "mlp.w2", layers[i].w2);
    }
}

ControlImage resolution_map(int h, int w) {
    if (h % kPatch != 0 || w % kPatch != 0 || h < kPatch || w < kPatch) {
        throw ShapeError("resolution_map: dims " + std::to_string(h) + "x" + std::to_string(w) +
                         " not positive multiples of " + std::to_string(kPatch));
    }
    const int cols = w / kPatch;
    ControlImage img;
    img.kind = ControlKind::resolution_map;
    img.raster = Raster(h, w, 1);
    for (int j = 0; j < cols; ++j) {
        const double frac = cols == 1 ? 1.0 : 1.0 - static_cast<double>(j) / (cols - 1);
        const auto v = static_cast<uint8_t>(std::lround(255.0 * frac));
        for (int y = 0; y < h; ++y) {
            for (int x = j * kPatch; x < (j + 1) * kPatch; ++x) img.raster.at(y, x) = v;
        }
    }
    return img;
}

}  // namespace carc
