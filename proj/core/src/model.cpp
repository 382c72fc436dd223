#include "carc/model.hpp"

namespace carc {

Model Model::init(const RunConfig& cfg, uint64_t seed) {
    cfg.validate();
    Model m;
    Rng rng(seed);
    m.dec = Decoder::init(cfg.model, cfg.fusion, rng);
    m.enc = Encoder::init(cfg.encoder, rng);
    m.fusion = cfg.fusion;
    return m;
}

std::vector<std::pair<std::string, Tensor>> Model::named_params() const {
    std::vector<std::pair<std::string, Tensor>> out;
    dec.collect_params(out);
    enc.collect_params(out);
    return out;
}

int64_t Model::param_count() const {
    int64_t n = 0;
    for (const auto& [name, t] : named_params()) n += t.numel();
    return n;
}

bool is_control_param(const std::string& name) {
    return name.rfind("enc.", 0) == 0 || name.rfind("fusion", 0) == 0 ||
           name.rfind("prefill_proj.", 0) == 0;
}

std::vector<Tensor> set_trainable(Model& m, TrainRegime regime) {
    std::vector<Tensor> trainable;
    for (auto& [name, t] : m.named_params()) {
        bool on = regime == TrainRegime::full || is_control_param(name);
        t.set_requires_grad(on);
        if (on) trainable.push_back(t);
    }
    return trainable;
}

}  // namespace carc
