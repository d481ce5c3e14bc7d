#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tgvad/encoders.hpp"
#include "tgvad/nn.hpp"
#include "tgvad/tensor.hpp"

namespace tgvad {

struct MsbtConfig {
    std::size_t fusion_layers = 5;  // L_M
    std::size_t first_tokens = 16;  // bottleneck tokens at layer 1
    std::size_t weight_layers = 1;  // L_W
    /// Halve the token count per layer (the multi-scale schedule); when
    /// false a fixed count is kept at every layer.
    bool reduce_tokens = true;
    /// Carry condensed tokens forward through the cross-Transformer; when
    /// false every layer starts from its own learned tokens.
    bool use_cross_transformer = true;
    /// Weight fused features from the final bottleneck tokens; when false
    /// the fused features are concatenated unweighted.
    bool weighting = true;
    /// Normalize weights across pairs with a softmax instead of a per-pair
    /// sigmoid.
    bool softmax_weights = false;
    /// One parameter set shared by every ordered pair instead of
    /// independent per-pair parameters.
    bool shared_pair_params = false;

    void validate() const;
};

/// Token counts per fusion layer: first element n1, each next floor(prev/2).
/// ConfigError (stating the minimal n1) if any layer would reach zero.
std::vector<std::size_t> halving_schedule(std::size_t n1, std::size_t layers);

using ModalityPair = std::pair<Modality, Modality>;

/// All ordered pairs (a, b), a != b, in the canonical order: for each
/// unordered pair in T,R,F,A order, (earlier, later) then (later, earlier).
/// For the full set this reads TR, RT, TF, FT, TA, AT, RF, FR, RA, AR, FA, AF.
std::vector<ModalityPair> enumerate_pairs(const std::vector<Modality>& modalities);

std::string pair_code(const ModalityPair& pair);

/// Result of fusing modality a into modality b.
struct FusedPair {
    ModalityPair pair;
    Tensor fused;        // N_T x D_E, the target-stream output of the last layer
    Tensor final_tokens; // refined bottleneck tokens of the last layer
    std::vector<std::size_t> token_counts; // bottleneck width actually used per layer
};

struct FusionOutput {
    std::vector<FusedPair> pairs; // canonical order
    Tensor weights;               // N_F x 1
    Tensor weighted;              // N_T x (N_F * D_E)
};

/// Multi-scale bottleneck fusion over every ordered modality pair plus the
/// bottleneck-token-based weighting of the concatenated results.
class Msbt {
public:
    Msbt(ParamStore& store, const MsbtConfig& cfg, const EncoderConfig& enc,
         const std::vector<Modality>& modalities);

    /// Fuses one ordered pair. AlignmentError when snippet counts differ.
    FusedPair fuse_pair(Tape& tape, const TokenSequence& source,
                        const TokenSequence& target) const;

    /// Fuses every pair in canonical order.
    std::vector<FusedPair> fuse_all(Tape& tape,
                                    const std::map<Modality, TokenSequence>& encoded) const;

    /// Weights and concatenates fused pairs. ContractError when the list is
    /// not in canonical order.
    FusionOutput weight_and_concat(Tape& tape, const std::vector<FusedPair>& pairs) const;

    /// Concatenation of pair features scaled by externally supplied weights
    /// (w has one entry per pair).
    static Tensor concat_weighted(Tape& tape, const std::vector<FusedPair>& pairs,
                                  const Tensor& weights);

    const std::vector<ModalityPair>& pairs() const { return pairs_; }
    const std::vector<std::size_t>& schedule() const { return schedule_; }
    std::size_t fused_width() const;
    const MsbtConfig& config() const { return cfg_; }

private:
    struct PairParams {
        Tensor first_tokens;
        std::vector<TransformerLayerParams> into_source; // joint layer over [Z_a || bt]
        std::vector<TransformerLayerParams> into_target; // joint layer over [Z_b || bt~]
        std::vector<Tensor> next_tokens;                 // fresh queries per transition
        std::vector<CrossTransformerLayerParams> cross;
        std::vector<Tensor> per_layer_tokens; // used when the cross-Transformer is off
    };

    const PairParams& params_for(const ModalityPair& pair) const;

    MsbtConfig cfg_;
    EncoderConfig enc_;
    std::vector<Modality> modalities_;
    std::vector<ModalityPair> pairs_;
    std::vector<std::size_t> schedule_;
    std::map<std::string, PairParams> pair_params_;
    std::vector<TransformerLayerParams> weight_tf_;
    std::vector<DenseLayer> weight_head_;
};

} // namespace tgvad
