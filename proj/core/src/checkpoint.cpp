#include "carc/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <type_traits>

#include "carc/error.hpp"

namespace carc {

namespace {

constexpr char kMagic[4] = {'C', 'A', 'R', 'C'};

template <typename T>
void put(std::ostream& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const char* what) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError(std::string("checkpoint truncated while reading ") + what);
    return v;
}

void put_string(std::ostream& out, const std::string& s) {
    put<uint64_t>(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, const char* what) {
    auto len = get<uint64_t>(in, what);
    if (len > (1ull << 32)) throw IoError(std::string("checkpoint: implausible length for ") + what);
    std::string s(len, '\0');
    in.read(s.data(), static_cast<std::streamsize>(len));
    if (!in) throw IoError(std::string("checkpoint truncated while reading ") + what);
    return s;
}

void put_floats(std::ostream& out, const std::vector<float>& v) {
    put<uint64_t>(out, v.size());
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(float)));
}

std::vector<float> get_floats(std::istream& in, const char* what) {
    auto n = get<uint64_t>(in, what);
    if (n > (1ull << 32)) throw IoError(std::string("checkpoint: implausible length for ") + what);
    std::vector<float> v(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) throw IoError(std::string("checkpoint truncated while reading ") + what);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(kMagic, 4);
    put<uint32_t>(out, ckpt.version);
    put_string(out, ckpt.config_text);
    put<uint64_t>(out, ckpt.tensors.size());
    for (const auto& t : ckpt.tensors) {
        put_string(out, t.name);
        put<uint32_t>(out, static_cast<uint32_t>(t.shape.size()));
        for (int d : t.shape) put<int32_t>(out, d);
        put_floats(out, t.data);
    }
    put<uint64_t>(out, ckpt.rng.seed);
    put<uint64_t>(out, ckpt.rng.stream);
    put<uint64_t>(out, ckpt.rng.counter);
    put<uint8_t>(out, ckpt.has_optim ? 1 : 0);
    if (ckpt.has_optim) {
        put<int64_t>(out, ckpt.optim_step);
        put<uint64_t>(out, ckpt.optim.size());
        for (const auto& e : ckpt.optim) {
            put_string(out, e.name);
            put_floats(out, e.m);
            put_floats(out, e.v);
        }
    }
    out.flush();
    if (!out) throw IoError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError(path + " is not a checkpoint (bad magic)");
    Checkpoint ckpt;
    ckpt.version = get<uint32_t>(in, "version");
    if (ckpt.version != kCheckpointVersion)
        throw IoError("checkpoint version " + std::to_string(ckpt.version) +
                      " unsupported (this build reads version " +
                      std::to_string(kCheckpointVersion) + ")");
    ckpt.config_text = get_string(in, "config");
    auto n_tensors = get<uint64_t>(in, "tensor count");
    for (uint64_t i = 0; i < n_tensors; ++i) {
        TensorBlob t;
        t.name = get_string(in, "tensor name");
        auto ndim = get<uint32_t>(in, "tensor rank");
        if (ndim > 8) throw IoError("checkpoint: implausible tensor rank");
        for (uint32_t d = 0; d < ndim; ++d) t.shape.push_back(get<int32_t>(in, "tensor dim"));
        t.data = get_floats(in, ("tensor '" + t.name + "'").c_str());
        if (static_cast<int64_t>(t.data.size()) != shape_numel(t.shape))
            throw IoError("checkpoint tensor '" + t.name + "' data does not match its shape");
        ckpt.tensors.push_back(std::move(t));
    }
    ckpt.rng.seed = get<uint64_t>(in, "rng seed");
    ckpt.rng.stream = get<uint64_t>(in, "rng stream");
    ckpt.rng.counter = get<uint64_t>(in, "rng counter");
    ckpt.has_optim = get<uint8_t>(in, "optimizer flag") != 0;
    if (ckpt.has_optim) {
        ckpt.optim_step = get<int64_t>(in, "optimizer step");
        auto n = get<uint64_t>(in, "optimizer entry count");
        for (uint64_t i = 0; i < n; ++i) {
            OptimEntry e;
            e.name = get_string(in, "optimizer entry name");
            e.m = get_floats(in, "optimizer m");
            e.v = get_floats(in, "optimizer v");
            if (e.m.size() != e.v.size())
                throw IoError("checkpoint optimizer entry '" + e.name + "' has mismatched moments");
            ckpt.optim.push_back(std::move(e));
        }
    }
    return ckpt;
}

Checkpoint snapshot_model(const Model& m, const RunConfig& cfg, RngState rng, const AdamW* opt) {
    Checkpoint ckpt;
    ckpt.config_text = cfg.to_text();
    auto named = m.named_params();
    for (const auto& [name, t] : named)
        ckpt.tensors.push_back({name, t.shape(), t.vec()});
    ckpt.rng = rng;
    if (opt) {
        ckpt.has_optim = true;
        ckpt.optim_step = opt->step_count();
        // map optimizer params back to their names by node identity
        auto& mm = const_cast<AdamW*>(opt)->moments_m();
        auto& vv = const_cast<AdamW*>(opt)->moments_v();
        const auto& ps = opt->params();
        for (size_t i = 0; i < ps.size(); ++i) {
            std::string name;
            for (const auto& [n, t] : named)
                if (t.node() == ps[i].node()) {
                    name = n;
                    break;
                }
            if (name.empty()) throw ConfigError("optimizer parameter is not part of the model");
            ckpt.optim.push_back({name, mm[i], vv[i]});
        }
    }
    return ckpt;
}

Model model_from_checkpoint(const Checkpoint& ckpt, RunConfig& cfg_out) {
    cfg_out = RunConfig::from_text(ckpt.config_text);
    Model m = Model::init(cfg_out, 0);
    auto named = m.named_params();
    if (named.size() != ckpt.tensors.size())
        throw IoError("checkpoint stores " + std::to_string(ckpt.tensors.size()) +
                      " tensors but the model has " + std::to_string(named.size()));
    std::map<std::string, Tensor> by_name(named.begin(), named.end());
    for (const auto& blob : ckpt.tensors) {
        auto it = by_name.find(blob.name);
        if (it == by_name.end())
            throw IoError("checkpoint tensor '" + blob.name + "' has no model counterpart");
        Tensor t = it->second;
        if (t.shape() != blob.shape)
            throw IoError("checkpoint tensor '" + blob.name + "' shape " +
                          shape_str(blob.shape) + " does not match model shape " +
                          shape_str(t.shape()));
        t.vec() = blob.data;
    }
    return m;
}

void load_optim_state(const Checkpoint& ckpt, const std::vector<std::string>& param_names,
                      AdamW& opt) {
    if (!ckpt.has_optim) throw IoError("checkpoint carries no optimizer state");
    if (ckpt.optim.size() != param_names.size())
        throw IoError("checkpoint optimizer state covers " + std::to_string(ckpt.optim.size()) +
                      " parameters, expected " + std::to_string(param_names.size()));
    auto& mm = opt.moments_m();
    auto& vv = opt.moments_v();
    for (size_t i = 0; i < param_names.size(); ++i) {
        const auto& e = ckpt.optim[i];
        if (e.name != param_names[i])
            throw IoError("checkpoint optimizer entry '" + e.name + "' does not line up with '" +
                          param_names[i] + "'");
        if (e.m.size() != mm[i].size())
            throw IoError("checkpoint optimizer entry '" + e.name + "' has wrong length");
        mm[i] = e.m;
        vv[i] = e.v;
    }
    opt.set_step_count(ckpt.optim_step);
}

}  // namespace carc
