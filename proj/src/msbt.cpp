#include "tgvad/msbt.hpp"

#include <algorithm>

#include "tgvad/errors.hpp"

namespace tgvad {

void MsbtConfig::validate() const {
    if (fusion_layers == 0) {
        throw ConfigError("at least one fusion layer is required");
    }
    if (first_tokens == 0) {
        throw ConfigError("at least one bottleneck token is required");
    }
    if (weight_layers == 0) {
        throw ConfigError("at least one weighting Transformer layer is required");
    }
    if (reduce_tokens) {
        halving_schedule(first_tokens, fusion_layers); // throws when unsatisfiable
    }
}

std::vector<std::size_t> halving_schedule(std::size_t n1, std::size_t layers) {
    if (layers == 0) {
        throw ConfigError("halving schedule needs at least one layer");
    }
    std::vector<std::size_t> schedule;
    schedule.reserve(layers);
    std::size_t count = n1;
    for (std::size_t l = 0; l < layers; ++l) {
        if (count == 0) {
            const std::size_t minimal = std::size_t{1} << (layers - 1);
            throw ConfigError("bottleneck schedule reaches zero tokens at layer " +
                              std::to_string(l + 1) + "; " + std::to_string(layers) +
                              " layers require a first-layer count of at least " +
                              std::to_string(minimal));
        }
        schedule.push_back(count);
        count /= 2;
    }
    return schedule;
}

std::vector<ModalityPair> enumerate_pairs(const std::vector<Modality>& modalities) {
    const auto mods = normalize_modalities(modalities);
    if (mods.size() < 2) {
        throw ConfigError("pairwise fusion needs at least two modalities, got " +
                          std::to_string(mods.size()));
    }
    std::vector<ModalityPair> pairs;
    pairs.reserve(mods.size() * (mods.size() - 1));
    for (std::size_t i = 0; i < mods.size(); ++i) {
        for (std::size_t j = i + 1; j < mods.size(); ++j) {
            pairs.emplace_back(mods[i], mods[j]);
            pairs.emplace_back(mods[j], mods[i]);
        }
    }
    return pairs;
}

std::string pair_code(const ModalityPair& pair) {
    return std::string{modality_code(pair.first), modality_code(pair.second)};
}

Msbt::Msbt(ParamStore& store, const MsbtConfig& cfg, const EncoderConfig& enc,
           const std::vector<Modality>& modalities)
    : cfg_(cfg), enc_(enc), modalities_(normalize_modalities(modalities)) {
    cfg_.validate();
    pairs_ = enumerate_pairs(modalities_);
    schedule_ = cfg_.reduce_tokens
                    ? halving_schedule(cfg_.first_tokens, cfg_.fusion_layers)
                    : std::vector<std::size_t>(cfg_.fusion_layers, cfg_.first_tokens);

    const std::size_t d = enc_.embed_dim;
    for (const auto& pair : pairs_) {
        const std::string prefix =
            cfg_.shared_pair_params ? std::string("msbt.shared") : "msbt." + pair_code(pair);
        PairParams params;
        params.first_tokens =
            store.create_or_get(prefix + ".bt1", schedule_[0], d, Init::SmallNormal);
        for (std::size_t l = 0; l < cfg_.fusion_layers; ++l) {
            const std::string lp = prefix + ".l" + std::to_string(l);
            params.into_source.push_back(make_transformer_layer(
                store, lp + ".src", d, enc_.num_heads, enc_.ffn_mult, enc_.ffn_act));
            params.into_target.push_back(make_transformer_layer(
                store, lp + ".tgt", d, enc_.num_heads, enc_.ffn_mult, enc_.ffn_act));
            if (l + 1 < cfg_.fusion_layers) {
                if (cfg_.use_cross_transformer) {
                    params.next_tokens.push_back(store.create_or_get(
                        lp + ".next", schedule_[l + 1], d, Init::SmallNormal));
                    params.cross.push_back(make_cross_transformer_layer(
                        store, lp + ".cross", d, enc_.num_heads, enc_.ffn_mult, enc_.ffn_act));
                } else {
                    params.per_layer_tokens.push_back(store.create_or_get(
                        prefix + ".bt" + std::to_string(l + 2), schedule_[l + 1], d,
                        Init::SmallNormal));
                }
            }
        }
        // With shared_pair_params every code maps to the same tensors.
        pair_params_.emplace(pair_code(pair), std::move(params));
    }

    for (std::size_t l = 0; l < cfg_.weight_layers; ++l) {
        weight_tf_.push_back(make_transformer_layer(store, "msbt.wt.l" + std::to_string(l), d,
                                                    enc_.num_heads, enc_.ffn_mult, enc_.ffn_act));
    }
    const std::size_t h1 = std::max<std::size_t>(1, d / 2);
    const std::size_t h2 = std::max<std::size_t>(1, d / 4);
    weight_head_ = make_mlp(store, "msbt.wr", {d, h1, h2, 1}, Activation::ReLU,
                            cfg_.softmax_weights ? Activation::Identity : Activation::Sigmoid);
}

const Msbt::PairParams& Msbt::params_for(const ModalityPair& pair) const {
    auto it = pair_params_.find(pair_code(pair));
    if (it == pair_params_.end()) {
        throw ContractError("no fusion parameters for pair " + pair_code(pair));
    }
    return it->second;
}

FusedPair Msbt::fuse_pair(Tape& tape, const TokenSequence& source,
                          const TokenSequence& target) const {
    if (source.tokens.rows() != target.tokens.rows()) {
        throw AlignmentError("snippet counts differ between modalities '" +
                             modality_name(source.modality) + "' (" +
                             std::to_string(source.tokens.rows()) + ") and '" +
                             modality_name(target.modality) + "' (" +
                             std::to_string(target.tokens.rows()) + ")");
    }
    if (source.tokens.cols() != enc_.embed_dim || target.tokens.cols() != enc_.embed_dim) {
        throw DimensionError("fuse_pair expects token width " + std::to_string(enc_.embed_dim));
    }
    const ModalityPair pair{source.modality, target.modality};
    const PairParams& params = params_for(pair);
    const auto d = static_cast<double>(enc_.embed_dim);
    const std::size_t n_t = source.tokens.rows();

    FusedPair result;
    result.pair = pair;

    Tensor stream_a = source.tokens;
    Tensor stream_b = target.tokens;
    Tensor tokens = params.first_tokens;
    Tensor refined;
    for (std::size_t l = 0; l < cfg_.fusion_layers; ++l) {
        if (l > 0 && !cfg_.use_cross_transformer) {
            tokens = params.per_layer_tokens[l - 1];
        }
        const std::size_t width = tokens.rows();
        result.token_counts.push_back(width);

        // Refine the tokens against the source stream, then transmit them
        // into the target stream; the trailing rows of the second joint pass
        // are not used further.
        Tensor joint_a = transformer_layer(tape, tape.concat_rows({stream_a, tokens}),
                                           params.into_source[l], d);
        stream_a = tape.slice_rows(joint_a, 0, n_t);
        refined = tape.slice_rows(joint_a, n_t, n_t + width);

        Tensor joint_b = transformer_layer(tape, tape.concat_rows({stream_b, refined}),
                                           params.into_target[l], d);
        stream_b = tape.slice_rows(joint_b, 0, n_t);

        if (l + 1 < cfg_.fusion_layers && cfg_.use_cross_transformer) {
            tokens = cross_transformer_layer(tape, params.next_tokens[l], refined,
                                             params.cross[l], d);
        }
    }
    result.fused = stream_b;
    result.final_tokens = refined;
    return result;
}

std::vector<FusedPair> Msbt::fuse_all(Tape& tape,
                                      const std::map<Modality, TokenSequence>& encoded) const {
    std::vector<FusedPair> fused;
    fused.reserve(pairs_.size());
    for (const auto& pair : pairs_) {
        auto a = encoded.find(pair.first);
        auto b = encoded.find(pair.second);
        if (a == encoded.end() || b == encoded.end()) {
            throw ContractError("missing encoded tokens for pair " + pair_code(pair));
        }
        fused.push_back(fuse_pair(tape, a->second, b->second));
    }
    return fused;
}

Tensor Msbt::concat_weighted(Tape& tape, const std::vector<FusedPair>& pairs,
                             const Tensor& weights) {
    if (weights.size() != pairs.size()) {
        throw AlignmentError("weight count " + std::to_string(weights.size()) +
                             " does not match pair count " + std::to_string(pairs.size()));
    }
    std::vector<Tensor> blocks;
    blocks.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        Tensor w_i = tape.slice_rows(weights, i, i + 1);
        blocks.push_back(tape.scale_by(pairs[i].fused, w_i));
    }
    return tape.concat_cols(blocks);
}

FusionOutput Msbt::weight_and_concat(Tape& tape, const std::vector<FusedPair>& pairs) const {
    if (pairs.size() != pairs_.size()) {
        throw ContractError("expected " + std::to_string(pairs_.size()) + " fused pairs, got " +
                            std::to_string(pairs.size()));
    }
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (pairs[i].pair != pairs_[i]) {
            throw ContractError("fused pair list is not in canonical order: slot " +
                                std::to_string(i) + " holds " + pair_code(pairs[i].pair) +
                                ", expected " + pair_code(pairs_[i]));
        }
    }

    FusionOutput out;
    out.pairs = pairs;

    if (!cfg_.weighting) {
        Tensor ones({pairs.size(), 1});
        std::fill(ones.values().begin(), ones.values().end(), 1.0);
        out.weights = ones;
        std::vector<Tensor> blocks;
        blocks.reserve(pairs.size());
        for (const auto& pair : pairs) {
            blocks.push_back(pair.fused);
        }
        out.weighted = tape.concat_cols(blocks);
        return out;
    }

    // One token per pair: the final refined tokens, mean-pooled when the last
    // layer keeps more than one.
    std::vector<Tensor> pooled;
    pooled.reserve(pairs.size());
    for (const auto& pair : pairs) {
        pooled.push_back(pair.final_tokens.rows() == 1 ? pair.final_tokens
                                                       : tape.mean_rows(pair.final_tokens));
    }
    Tensor stack = tape.concat_rows(pooled);
    const auto d = static_cast<double>(enc_.embed_dim);
    for (const auto& layer : weight_tf_) {
        stack = transformer_layer(tape, stack, layer, d);
    }
    Tensor weights = mlp_forward(tape, stack, weight_head_); // N_F x 1
    if (cfg_.softmax_weights) {
        weights = tape.transpose(tape.softmax_rows(tape.transpose(weights)));
    }
    out.weights = weights;
    out.weighted = concat_weighted(tape, pairs, weights);
    return out;
}

std::size_t Msbt::fused_width() const {
    return pairs_.size() * enc_.embed_dim;
}

} // namespace tgvad
