#include "tgvad/detection.hpp"

#include <algorithm>
#include <cmath>

#include "tgvad/errors.hpp"

namespace tgvad {

void TrainConfig::validate() const {
    if (top_k == 0) {
        throw ConfigError("top-K must be at least 1");
    }
    if (alpha < 0.0 || alpha > 1.0) {
        throw ConfigError("alpha must lie in [0, 1], got " + std::to_string(alpha));
    }
    if (batch_size == 0) {
        throw ConfigError("batch size must be at least 1");
    }
    if (learning_rate <= 0.0) {
        throw ConfigError("learning rate must be positive");
    }
}

GlobalScorer::GlobalScorer(ParamStore& store, std::size_t width, std::size_t num_heads,
                           std::size_t num_layers, std::size_t ffn_mult, Activation ffn_act)
    : width_(width) {
    if (width == 0 || num_heads == 0 || width % num_heads != 0) {
        throw ConfigError("global encoder width " + std::to_string(width) +
                          " must be a positive multiple of head count " +
                          std::to_string(num_heads));
    }
    for (std::size_t l = 0; l < num_layers; ++l) {
        layers_.push_back(make_transformer_layer(store, "global.l" + std::to_string(l), width,
                                                 num_heads, ffn_mult, ffn_act));
    }
    const std::size_t h1 = std::max<std::size_t>(1, width / 2);
    const std::size_t h2 = std::max<std::size_t>(1, width / 4);
    regressor_ = make_mlp(store, "global.sr", {width, h1, h2, 1}, Activation::ReLU,
                          Activation::Sigmoid);
}

Tensor GlobalScorer::score(Tape& tape, const Tensor& fused) const {
    if (fused.cols() != width_) {
        throw ConfigError("fused feature width " + std::to_string(fused.cols()) +
                          " does not match the configured width " + std::to_string(width_));
    }
    Tensor h = fused;
    const auto d = static_cast<double>(width_);
    for (const auto& layer : layers_) {
        h = transformer_layer(tape, h, layer, d);
    }
    return mlp_forward(tape, h, regressor_);
}

double mil_loss(double s_bar, int label) {
    const double c = std::clamp(s_bar, 1e-7, 1.0 - 1e-7);
    const double y = label ? 1.0 : 0.0;
    return -y * std::log(c) - (1.0 - y) * std::log(1.0 - c);
}

std::vector<double> blend_scores(const std::vector<double>& s, const std::vector<double>& p,
                                 double alpha) {
    if (s.size() != p.size()) {
        throw AlignmentError("blend_scores length mismatch: " + std::to_string(s.size()) +
                             " fused scores vs " + std::to_string(p.size()) +
                             " text probabilities");
    }
    if (alpha < 0.0 || alpha > 1.0) {
        throw ConfigError("alpha must lie in [0, 1], got " + std::to_string(alpha));
    }
    std::vector<double> out(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        out[i] = alpha * s[i] + (1.0 - alpha) * p[i];
    }
    return out;
}

ScoreTriple make_score_triple(std::vector<double> fused,
                              std::optional<std::vector<double>> text, double alpha) {
    ScoreTriple triple;
    triple.fused = std::move(fused);
    triple.text = std::move(text);
    triple.final_scores =
        triple.text ? blend_scores(triple.fused, *triple.text, alpha) : triple.fused;
    return triple;
}

} // namespace tgvad
