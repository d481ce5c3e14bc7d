#include "tgvad/encoders.hpp"

#include <algorithm>

#include "tgvad/errors.hpp"

namespace tgvad {

char modality_code(Modality m) {
    return static_cast<char>(m);
}

Modality modality_from_code(char c) {
    switch (c) {
        case 'T': return Modality::Text;
        case 'R': return Modality::Rgb;
        case 'F': return Modality::Flow;
        case 'A': return Modality::Audio;
        default: break;
    }
    throw ConfigError(std::string("unknown modality code '") + c + "' (expected T, R, F or A)");
}

std::string modality_name(Modality m) {
    switch (m) {
        case Modality::Text: return "text";
        case Modality::Rgb: return "rgb";
        case Modality::Flow: return "flow";
        case Modality::Audio: return "audio";
    }
    return "?";
}

int modality_rank(Modality m) {
    switch (m) {
        case Modality::Text: return 0;
        case Modality::Rgb: return 1;
        case Modality::Flow: return 2;
        case Modality::Audio: return 3;
    }
    return 4;
}

std::vector<Modality> parse_modalities(const std::string& text) {
    std::vector<Modality> mods;
    for (char c : text) {
        if (c == ',' || c == ' ' || c == '\t') {
            continue;
        }
        mods.push_back(modality_from_code(c));
    }
    return normalize_modalities(std::move(mods));
}

std::vector<Modality> normalize_modalities(std::vector<Modality> mods) {
    if (mods.empty()) {
        throw ConfigError("modality set must not be empty");
    }
    std::sort(mods.begin(), mods.end(),
              [](Modality a, Modality b) { return modality_rank(a) < modality_rank(b); });
    for (std::size_t i = 1; i < mods.size(); ++i) {
        if (mods[i] == mods[i - 1]) {
            throw ConfigError("modality '" + modality_name(mods[i]) + "' listed twice");
        }
    }
    return mods;
}

void EncoderConfig::validate() const {
    if (embed_dim == 0 || num_heads == 0 || embed_dim % num_heads != 0) {
        throw ConfigError("embed dim " + std::to_string(embed_dim) +
                          " must be a positive multiple of head count " +
                          std::to_string(num_heads));
    }
    if (max_positions == 0) {
        throw ConfigError("positional table needs at least one entry");
    }
}

UnimodalEncoder::UnimodalEncoder(ParamStore& store, const EncoderConfig& cfg,
                                 const std::map<Modality, std::size_t>& feature_dims)
    : cfg_(cfg) {
    cfg_.validate();
    for (const auto& [modality, dim] : feature_dims) {
        if (dim == 0) {
            throw ConfigError("feature dim for modality '" + modality_name(modality) +
                              "' must be positive");
        }
        DenseLayer proj;
        const std::string prefix = std::string("enc.proj.") + modality_code(modality);
        proj.weight = store.create(prefix + ".w", dim, cfg_.embed_dim, Init::XavierUniform);
        proj.bias = store.create(prefix + ".b", 1, cfg_.embed_dim, Init::Zero);
        proj.act = Activation::Identity;
        projections_.emplace(modality, std::move(proj));
    }
    if (cfg_.learned_positional) {
        positional_ = store.create("enc.pos", cfg_.max_positions, cfg_.embed_dim,
                                   Init::SmallNormal);
    }
    for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
        layers_.push_back(make_transformer_layer(store, "enc.shared.l" + std::to_string(l),
                                                 cfg_.embed_dim, cfg_.num_heads, cfg_.ffn_mult,
                                                 cfg_.ffn_act));
    }
}

TokenSequence UnimodalEncoder::project(Tape& tape, const SnippetFeatures& features) const {
    auto it = projections_.find(features.modality);
    if (it == projections_.end()) {
        throw ConfigError("no projection configured for modality '" +
                          modality_name(features.modality) + "'");
    }
    const DenseLayer& proj = it->second;
    if (features.matrix.cols() != proj.weight.rows()) {
        throw ConfigError("modality '" + modality_name(features.modality) + "' features have " +
                          std::to_string(features.matrix.cols()) +
                          " columns but the projection expects " +
                          std::to_string(proj.weight.rows()));
    }
    Tensor tokens = tape.add_row_bias(tape.matmul(features.matrix, proj.weight), proj.bias);
    if (cfg_.learned_positional) {
        std::vector<std::size_t> positions(tokens.rows());
        for (std::size_t i = 0; i < positions.size(); ++i) {
            positions[i] = std::min(i, cfg_.max_positions - 1);
        }
        tokens = tape.add(tokens, tape.gather_rows(positional_, positions));
    }
    return {features.modality, tokens};
}

TokenSequence UnimodalEncoder::encode(Tape& tape, const SnippetFeatures& features) const {
    TokenSequence seq = project(tape, features);
    const auto d = static_cast<double>(cfg_.embed_dim);
    for (const auto& layer : layers_) {
        seq.tokens = transformer_layer(tape, seq.tokens, layer, d);
    }
    return seq;
}

} // namespace tgvad
