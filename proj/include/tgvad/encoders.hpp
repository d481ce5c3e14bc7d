#pragma once

#include <map>
#include <string>
#include <vector>

#include "tgvad/nn.hpp"
#include "tgvad/tensor.hpp"

namespace tgvad {

/// Input channels: text, RGB, optical flow, audio.
enum class Modality : char { Text = 'T', Rgb = 'R', Flow = 'F', Audio = 'A' };

char modality_code(Modality m);
Modality modality_from_code(char c);
std::string modality_name(Modality m);
/// Position in the canonical T, R, F, A ordering.
int modality_rank(Modality m);

/// Parses "T,R,F" (or "TRF") into the canonical order, rejecting duplicates
/// and unknown codes.
std::vector<Modality> parse_modalities(const std::string& text);

/// Sorted into canonical order with duplicates rejected; ConfigError when
/// empty.
std::vector<Modality> normalize_modalities(std::vector<Modality> mods);

/// Raw per-snippet feature rows for one modality of one video.
struct SnippetFeatures {
    Modality modality = Modality::Rgb;
    Tensor matrix; // N_T x D_m
    std::size_t frames_per_snippet = 1;
};

struct EncoderConfig {
    std::size_t embed_dim = 128;  // D_E
    std::size_t num_heads = 4;    // N_H
    std::size_t num_layers = 1;   // L_U
    bool learned_positional = true;
    std::size_t max_positions = 512;
    std::size_t ffn_mult = 4;
    Activation ffn_act = Activation::ReLU;

    void validate() const;
};

struct TokenSequence {
    Modality modality = Modality::Rgb;
    Tensor tokens; // N_T x D_E
};

/// Per-modality linear projection into the shared embedding space plus a
/// Transformer whose weights are shared across all modalities. The learned
/// positional table is added after projection; videos longer than the table
/// clamp to the last position.
class UnimodalEncoder {
public:
    UnimodalEncoder(ParamStore& store, const EncoderConfig& cfg,
                    const std::map<Modality, std::size_t>& feature_dims);

    TokenSequence project(Tape& tape, const SnippetFeatures& features) const;
    TokenSequence encode(Tape& tape, const SnippetFeatures& features) const;

    const EncoderConfig& config() const { return cfg_; }

private:
    EncoderConfig cfg_;
    std::map<Modality, DenseLayer> projections_;
    Tensor positional_;
    std::vector<TransformerLayerParams> layers_;
};

} // namespace tgvad
