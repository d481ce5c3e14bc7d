#include "tgvad/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "tgvad/errors.hpp"
#include "tgvad/rng.hpp"
#include "tgvad/serialize.hpp"

namespace tgvad {

namespace {

constexpr char kParamFileMagic[8] = {'T', 'G', 'V', 'P', 'A', 'R', 'M', '1'};

} // namespace

ParamStore::ParamStore(std::uint64_t seed) : seed_(seed) {}

Tensor ParamStore::create(const std::string& name, std::size_t rows, std::size_t cols,
                          Init init) {
    if (params_.count(name)) {
        throw ContractError("parameter '" + name + "' already exists");
    }
    Tensor t({rows, cols});
    Rng rng(mix_seed(seed_, hash_text(name)));
    switch (init) {
        case Init::Zero:
            break;
        case Init::One:
            for (double& v : t.values()) v = 1.0;
            break;
        case Init::XavierUniform: {
            const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
            for (double& v : t.values()) v = rng.uniform(-limit, limit);
            break;
        }
        case Init::SmallNormal:
            for (double& v : t.values()) v = rng.normal(0.0, 0.02);
            break;
    }
    t.set_requires_grad(true);
    params_.emplace(name, t);
    return t;
}

Tensor ParamStore::create_or_get(const std::string& name, std::size_t rows, std::size_t cols,
                                 Init init) {
    auto it = params_.find(name);
    if (it != params_.end()) {
        if (it->second.rows() != rows || it->second.cols() != cols) {
            throw ContractError("parameter '" + name + "' reused with a different shape");
        }
        return it->second;
    }
    return create(name, rows, cols, init);
}

bool ParamStore::contains(const std::string& name) const {
    return params_.count(name) != 0;
}

Tensor ParamStore::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) {
        throw ContractError("unknown parameter '" + name + "'");
    }
    return it->second;
}

std::size_t ParamStore::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) {
        n += t.size();
    }
    return n;
}

void ParamStore::zero_grads() {
    for (auto& [name, t] : params_) {
        t.zero_grad();
    }
}

void ParamStore::sgd_step(double lr) {
    for (auto& [name, t] : params_) {
        if (!t.has_grad()) {
            continue;
        }
        const auto& g = t.grad();
        auto& v = t.values();
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] -= lr * g[i];
        }
    }
}

double ParamStore::grad_l2_norm() const {
    double acc = 0.0;
    for (const auto& [name, t] : params_) {
        if (!t.has_grad()) {
            continue;
        }
        for (double g : t.grad()) {
            acc += g * g;
        }
    }
    return std::sqrt(acc);
}

void ParamStore::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open '" + path + "' for writing");
    }
    save(out);
    if (!out) {
        throw IoError("failed writing parameters to '" + path + "'");
    }
}

void ParamStore::save(std::ostream& out) const {
    write_bytes(out, kParamFileMagic, sizeof(kParamFileMagic));
    write_u32(out, static_cast<std::uint32_t>(params_.size()));
    for (const auto& [name, t] : params_) {
        write_u32(out, static_cast<std::uint32_t>(name.size()));
        write_bytes(out, name.data(), name.size());
        write_u32(out, static_cast<std::uint32_t>(t.rows()));
        write_u32(out, static_cast<std::uint32_t>(t.cols()));
        for (double v : t.values()) {
            write_f64(out, v);
        }
    }
}

void ParamStore::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open parameter file '" + path + "'");
    }
    std::size_t offset = 0;
    load(in, offset, path);
}

void ParamStore::load(std::istream& in, std::size_t& offset, const std::string& origin) {
    const auto magic = read_exact(in, sizeof(kParamFileMagic), offset, "magic");
    if (std::memcmp(magic.data(), kParamFileMagic, sizeof(kParamFileMagic)) != 0) {
        throw ParseError("'" + origin + "' holds no parameter block at offset " +
                         std::to_string(offset - sizeof(kParamFileMagic)));
    }
    const std::uint32_t count = read_u32(in, offset, "parameter count");
    if (count != params_.size()) {
        throw ParseError("parameter block in '" + origin + "' holds " + std::to_string(count) +
                         " tensors, model expects " + std::to_string(params_.size()));
    }
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = read_u32(in, offset, "name length");
        const auto name_bytes = read_exact(in, name_len, offset, "parameter name");
        const std::string name(name_bytes.begin(), name_bytes.end());
        auto it = params_.find(name);
        if (it == params_.end()) {
            throw ParseError("parameter block in '" + origin + "' names unknown tensor '" +
                             name + "'");
        }
        const std::uint32_t rows = read_u32(in, offset, "rows of " + name);
        const std::uint32_t cols = read_u32(in, offset, "cols of " + name);
        Tensor& t = it->second;
        if (rows != t.rows() || cols != t.cols()) {
            throw ParseError("shape mismatch for '" + name + "' in '" + origin + "': file has " +
                             std::to_string(rows) + " x " + std::to_string(cols) +
                             ", model expects " + t.shape_string());
        }
        for (double& v : t.values()) {
            v = read_f64(in, offset, "payload of " + name);
        }
    }
}

AttentionParams make_attention(ParamStore& store, const std::string& prefix, std::size_t d_model,
                               std::size_t n_heads) {
    if (n_heads == 0 || d_model % n_heads != 0) {
        throw ConfigError("embed dim " + std::to_string(d_model) +
                          " is not divisible by head count " + std::to_string(n_heads));
    }
    const std::size_t d_head = d_model / n_heads;
    AttentionParams p;
    for (std::size_t h = 0; h < n_heads; ++h) {
        const std::string hp = prefix + ".h" + std::to_string(h);
        p.wq.push_back(store.create_or_get(hp + ".wq", d_model, d_head, Init::XavierUniform));
        p.wk.push_back(store.create_or_get(hp + ".wk", d_model, d_head, Init::XavierUniform));
        p.wv.push_back(store.create_or_get(hp + ".wv", d_model, d_head, Init::XavierUniform));
    }
    p.wo = store.create_or_get(prefix + ".wo", d_model, d_model, Init::XavierUniform);
    return p;
}

std::vector<DenseLayer> make_mlp(ParamStore& store, const std::string& prefix,
                                 const std::vector<std::size_t>& widths, Activation hidden_act,
                                 Activation final_act) {
    if (widths.size() < 2) {
        throw ContractError("make_mlp needs at least input and output widths");
    }
    std::vector<DenseLayer> layers;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        const bool last = i + 2 == widths.size();
        DenseLayer layer;
        layer.weight = store.create_or_get(prefix + ".l" + std::to_string(i) + ".w", widths[i],
                                           widths[i + 1], Init::XavierUniform);
        layer.bias = store.create_or_get(prefix + ".l" + std::to_string(i) + ".b", 1,
                                         widths[i + 1], Init::Zero);
        layer.act = last ? final_act : hidden_act;
        layers.push_back(std::move(layer));
    }
    return layers;
}

TransformerLayerParams make_transformer_layer(ParamStore& store, const std::string& prefix,
                                              std::size_t d_model, std::size_t n_heads,
                                              std::size_t ffn_mult, Activation ffn_act) {
    TransformerLayerParams p;
    p.ln1_gain = store.create_or_get(prefix + ".ln1.g", 1, d_model, Init::One);
    p.ln1_bias = store.create_or_get(prefix + ".ln1.b", 1, d_model, Init::Zero);
    p.attn = make_attention(store, prefix + ".attn", d_model, n_heads);
    p.ln2_gain = store.create_or_get(prefix + ".ln2.g", 1, d_model, Init::One);
    p.ln2_bias = store.create_or_get(prefix + ".ln2.b", 1, d_model, Init::Zero);
    p.ffn = make_mlp(store, prefix + ".ffn", {d_model, d_model * ffn_mult, d_model}, ffn_act,
                     Activation::Identity);
    return p;
}

CrossTransformerLayerParams make_cross_transformer_layer(ParamStore& store,
                                                         const std::string& prefix,
                                                         std::size_t d_model, std::size_t n_heads,
                                                         std::size_t ffn_mult,
                                                         Activation ffn_act) {
    CrossTransformerLayerParams p;
    p.ln_q_gain = store.create_or_get(prefix + ".lnq.g", 1, d_model, Init::One);
    p.ln_q_bias = store.create_or_get(prefix + ".lnq.b", 1, d_model, Init::Zero);
    p.ln_kv_gain = store.create_or_get(prefix + ".lnkv.g", 1, d_model, Init::One);
    p.ln_kv_bias = store.create_or_get(prefix + ".lnkv.b", 1, d_model, Init::Zero);
    p.attn = make_attention(store, prefix + ".attn", d_model, n_heads);
    p.ln2_gain = store.create_or_get(prefix + ".ln2.g", 1, d_model, Init::One);
    p.ln2_bias = store.create_or_get(prefix + ".ln2.b", 1, d_model, Init::Zero);
    p.ffn = make_mlp(store, prefix + ".ffn", {d_model, d_model * ffn_mult, d_model}, ffn_act,
                     Activation::Identity);
    return p;
}

Tensor attention_probs(Tape& tape, const Tensor& q, const Tensor& k, double d) {
    return tape.softmax_rows(tape.scale(tape.matmul_nt(q, k), 1.0 / std::sqrt(d)));
}

namespace {

Tensor attention_heads(Tape& tape, const Tensor& q_src, const Tensor& kv_src,
                       const AttentionParams& params, double d) {
    std::vector<Tensor> heads;
    heads.reserve(params.wq.size());
    for (std::size_t h = 0; h < params.wq.size(); ++h) {
        Tensor q = tape.matmul(q_src, params.wq[h]);
        Tensor k = tape.matmul(kv_src, params.wk[h]);
        Tensor v = tape.matmul(kv_src, params.wv[h]);
        heads.push_back(tape.matmul(attention_probs(tape, q, k, d), v));
    }
    return tape.matmul(tape.concat_cols(heads), params.wo);
}

} // namespace

Tensor msa(Tape& tape, const Tensor& x, const AttentionParams& params, double d) {
    return attention_heads(tape, x, x, params, d);
}

Tensor msa_cross(Tape& tape, const Tensor& q_in, const Tensor& kv_in,
                 const AttentionParams& params, double d) {
    return attention_heads(tape, q_in, kv_in, params, d);
}

Tensor transformer_layer(Tape& tape, const Tensor& x, const TransformerLayerParams& params,
                         double d) {
    Tensor attended = tape.add(msa(tape, tape.layer_norm(x, params.ln1_gain, params.ln1_bias),
                                   params.attn, d),
                               x);
    Tensor normed = tape.layer_norm(attended, params.ln2_gain, params.ln2_bias);
    return tape.add(mlp_forward(tape, normed, params.ffn), attended);
}

Tensor cross_transformer_layer(Tape& tape, const Tensor& queries, const Tensor& keyvalues,
                               const CrossTransformerLayerParams& params, double d) {
    Tensor q = tape.layer_norm(queries, params.ln_q_gain, params.ln_q_bias);
    Tensor kv = tape.layer_norm(keyvalues, params.ln_kv_gain, params.ln_kv_bias);
    Tensor attended = tape.add(msa_cross(tape, q, kv, params.attn, d), queries);
    Tensor normed = tape.layer_norm(attended, params.ln2_gain, params.ln2_bias);
    return tape.add(mlp_forward(tape, normed, params.ffn), attended);
}

} // namespace tgvad
