#include "carc/eval.hpp"

#include <sstream>

#include "carc/error.hpp"
#include "carc/metrics.hpp"
#include "carc/trainer.hpp"

namespace carc {

std::string EvalReport::to_line() const {
    std::ostringstream out;
    out << "n=" << n << " edge_f1=" << edge_f1 << " edge_ssim=" << edge_ssim
        << " edge_miou=" << edge_miou << " image_rmse=" << image_rmse << " frechet=" << frechet;
    return out.str();
}

namespace {

Raster as_ids(const Raster& binary) {
    Raster out = binary;
    for (auto& px : out.pix) px = px ? 1 : 0;
    return out;
}

}  // namespace

EvalReport evaluate(const Model& m, const std::vector<Sample>& samples, ControlKind kind,
                    const SamplingParams& params, int n_max) {
    if (samples.empty()) throw ConfigError("evaluate needs at least one sample");
    const Palette pal = default_palette();
    EvalReport report;
    std::vector<Raster> gen_set, ref_set;
    for (const auto& s : samples) {
        if (report.n >= n_max) break;
        ControlImage control = control_from_sample(s, kind);
        ControlTokens ct = m.enc.encode(control);
        SamplingParams p = params;
        p.seed = params.seed + static_cast<uint64_t>(report.n);
        TokenGrid gen = generate(m.dec, s.class_id, ct, m.fusion, p);

        Raster pred = decode_tokens(gen, pal);
        Raster ref = decode_tokens(encode_image(s.image, pal), pal);
        Raster pred_edges = edges_from_raster(pred);
        Raster ref_edges = edges_from_raster(ref);

        report.edge_f1 += f1_edge(pred_edges, ref_edges);
        report.edge_ssim += ssim(pred_edges, ref_edges);
        report.edge_miou += miou(as_ids(pred_edges), as_ids(ref_edges), 2);
        report.image_rmse += rmse(pred, ref);
        gen_set.push_back(std::move(pred));
        ref_set.push_back(std::move(ref));
        ++report.n;
    }
    report.edge_f1 /= report.n;
    report.edge_ssim /= report.n;
    report.edge_miou /= report.n;
    report.image_rmse /= report.n;
    report.frechet = report.n >= 2 ? frechet_surrogate(gen_set, ref_set) : 0.0;
    return report;
}

}  // namespace carc
