#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tgvad/detection.hpp"
#include "tgvad/encoders.hpp"
#include "tgvad/msbt.hpp"

namespace tgvad {

/// Flat key=value run configuration. Every hyperparameter defaults to the
/// reference values; unknown keys are rejected.
struct RunConfig {
    std::uint64_t seed = 7;
    std::string modalities = "T,R,F,A";

    // unimodal encoders
    std::size_t embed_dim = 128;   // D_E
    std::size_t num_heads = 4;     // N_H
    std::size_t encoder_layers = 1; // L_U
    std::string positional = "learned"; // learned | none
    std::size_t positional_table = 512;
    std::size_t ffn_mult = 4;
    std::string ffn_activation = "relu";

    // multi-scale bottleneck fusion
    std::size_t fusion_layers = 5;  // L_M
    std::size_t first_tokens = 16;  // N^bt_1
    std::size_t weight_layers = 1;  // L_W
    std::string msbt_tokens = "reduced"; // reduced | fixed
    bool msbt_cross_transformer = true;
    bool msbt_weighting = true;
    std::string msbt_weight_activation = "sigmoid"; // sigmoid | softmax
    bool msbt_shared_pair_params = false;

    // detection head and training
    std::size_t global_layers = 3; // L_G
    std::size_t top_k = 9;
    double alpha = 0.5;
    std::size_t batch_size = 32;
    double learning_rate = 0.0004;
    std::size_t train_steps = 300;

    // text augmentation
    std::size_t num_samplings = 10;   // N_S
    std::size_t context_samples = 80; // N_R
    double delta = 0.7;
    std::string num_generated = "auto"; // integer or "auto" (balance the classes)

    // text features and head
    std::size_t text_dim = 64; // D_T
    std::string embedder = "hash"; // hash | file
    std::string embedding_file;
    std::size_t text_head_hidden = 32;
    double text_head_lr = 0.5;
    std::size_t text_head_steps = 400;
    std::size_t text_head_batch = 32;

    // synthetic dataset generation
    std::size_t synth_train_normal = 20;
    std::size_t synth_train_abnormal = 20;
    std::size_t synth_test_normal = 10;
    std::size_t synth_test_abnormal = 10;
    std::size_t synth_snippets_min = 14;
    std::size_t synth_snippets_max = 20;
    std::size_t synth_frames_per_snippet = 16;
    std::size_t synth_dim_rgb = 64;
    std::size_t synth_dim_flow = 32;
    std::size_t synth_dim_audio = 24;
    double synth_strength = 3.0;
    double synth_span_min = 0.4;
    double synth_span_max = 0.7;

    /// Applies one key=value override; ConfigError on unknown keys or
    /// unparseable values.
    void set(const std::string& key, const std::string& value);
    void validate() const;

    std::vector<Modality> modality_set() const;
    /// Number of generated samples, or nullopt for "auto".
    std::optional<std::size_t> generated_count() const;
};

RunConfig parse_run_config(const std::string& text, const std::string& origin);
RunConfig read_run_config(const std::string& path);

EncoderConfig encoder_config(const RunConfig& cfg);
MsbtConfig msbt_config(const RunConfig& cfg);
TrainConfig train_config(const RunConfig& cfg);

} // namespace tgvad
