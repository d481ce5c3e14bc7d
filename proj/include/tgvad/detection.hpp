#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "tgvad/nn.hpp"
#include "tgvad/tensor.hpp"

namespace tgvad {

struct TrainConfig {
    std::size_t top_k = 9;       // K in the MIL loss
    double alpha = 0.5;          // blend between fused score and text probability
    std::size_t batch_size = 32;
    double learning_rate = 0.0004;
    std::size_t train_steps = 300;
    std::uint64_t seed = 7;

    void validate() const;
};

/// Per-snippet scores of one video: the fused-feature score s, the optional
/// text probability p, and the blended final score.
struct ScoreTriple {
    std::vector<double> fused;                       // s
    std::optional<std::vector<double>> text;         // p
    std::vector<double> final_scores;                // alpha*s + (1-alpha)*p
};

/// Transformer over all snippets of a video (context aggregation at the
/// fused width) followed by a three-layer MLP regressor with a sigmoid.
class GlobalScorer {
public:
    GlobalScorer(ParamStore& store, std::size_t width, std::size_t num_heads,
                 std::size_t num_layers, std::size_t ffn_mult, Activation ffn_act);

    /// fused is N_T x width; returns N_T x 1 scores in (0, 1).
    Tensor score(Tape& tape, const Tensor& fused) const;

private:
    std::size_t width_;
    std::vector<TransformerLayerParams> layers_;
    std::vector<DenseLayer> regressor_;
};

/// Binary cross-entropy on a top-K mean score, clamped to
/// [1e-7, 1 - 1e-7] before the logs.
double mil_loss(double s_bar, int label);

/// Elementwise alpha*s + (1-alpha)*p. AlignmentError on length mismatch;
/// ConfigError when alpha is outside [0, 1].
std::vector<double> blend_scores(const std::vector<double>& s, const std::vector<double>& p,
                                 double alpha);

/// Builds the triple, blending only when text probabilities are present.
ScoreTriple make_score_triple(std::vector<double> fused,
                              std::optional<std::vector<double>> text, double alpha);

} // namespace tgvad
