#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tgvad/config.hpp"
#include "tgvad/data_io.hpp"
#include "tgvad/detection.hpp"
#include "tgvad/encoders.hpp"
#include "tgvad/msbt.hpp"
#include "tgvad/text.hpp"

namespace tgvad {

struct ModelConfig {
    std::vector<Modality> modalities;
    std::map<Modality, std::size_t> feature_dims;
    EncoderConfig encoder;
    MsbtConfig msbt;
    std::size_t global_layers = 3;
    std::uint64_t seed = 7;

    static ModelConfig from_run_config(const RunConfig& cfg,
                                       const std::map<Modality, std::size_t>& feature_dims);
};

/// The full fusion network: unimodal encoders, pairwise multi-scale
/// bottleneck fusion with weighting, global encoder and score regressor.
class FusionModel {
public:
    explicit FusionModel(ModelConfig cfg);

    /// Per-snippet fused anomaly scores (N_T x 1) for one video.
    /// ContractError when a configured modality is missing; AlignmentError
    /// when snippet counts disagree.
    Tensor score_video(Tape& tape, const std::map<Modality, SnippetFeatures>& features) const;

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return store_; }
    const Msbt& msbt() const { return *msbt_; }

    void save(const std::string& path) const;
    static FusionModel load(const std::string& path);

private:
    ModelConfig cfg_;
    ParamStore store_;
    std::unique_ptr<UnimodalEncoder> encoder_;
    std::unique_ptr<Msbt> msbt_;
    std::unique_ptr<GlobalScorer> scorer_;
};

// ---------------------------------------------------------------------------
// Dataset loading
// ---------------------------------------------------------------------------

struct LoadedVideo {
    std::string id;
    int label = 0;
    std::map<Modality, SnippetFeatures> features;
    std::vector<CaptionSample> captions;
    std::vector<int> frame_labels; // test videos
    std::size_t snippet_count = 0;
    std::size_t frames_per_snippet = 1;
};

struct LoadedDataset {
    std::vector<LoadedVideo> train;
    std::vector<LoadedVideo> test;
};

/// Loads every referenced file and validates alignment (shared snippet
/// counts across modalities, frame label lengths).
LoadedDataset load_dataset(const DatasetManifest& manifest,
                           const std::vector<Modality>& modalities);

// ---------------------------------------------------------------------------
// Training and evaluation
// ---------------------------------------------------------------------------

struct TrainHooks {
    /// Called after every optimizer step with the mean batch loss.
    std::function<void(std::size_t step, double loss)> on_step;
    /// Checked after every step; return true to stop early.
    std::function<bool(std::size_t step)> should_stop;
};

struct TrainResult {
    std::vector<double> loss_trace;
    std::size_t steps_run = 0;
};

/// Top-K MIL training with plain SGD. Batches cycle through a seeded
/// shuffle of the training videos; gradients within a batch are accumulated
/// in video-id order. NumericError (naming the step) if the loss leaves the
/// finite range.
TrainResult train_model(FusionModel& model, const std::vector<LoadedVideo>& train_videos,
                        const TrainConfig& cfg, const TrainHooks& hooks = {});

/// Per-snippet text probabilities: the head's probability averaged over the
/// captions mapped to each snippet; nullopt for snippets without captions.
std::vector<std::optional<double>> snippet_text_probabilities(
    const TextHead& head, const TextEmbedder& embedder,
    const std::vector<CaptionSample>& captions, std::size_t snippet_count);

struct EvalResult {
    double auc = 0.0;
    double ap = 0.0;
    std::vector<ScoreRow> rows;
};

/// Scores every test video, blends with text probabilities when a head and
/// embedder are supplied, expands snippet scores over frames and computes
/// the pooled frame-level AUC and AP.
EvalResult evaluate_model(const FusionModel& model, const std::vector<LoadedVideo>& test_videos,
                          const TextHead* head, const TextEmbedder* embedder, double alpha);

/// Frame-level metrics for precomputed score curves (the s_hat column),
/// judged against the manifest's frame label files. Needs no feature files;
/// the frame span of each snippet is inferred from the label count.
EvalResult evaluate_scores(const DatasetManifest& manifest, const std::vector<ScoreRow>& rows);

/// Column widths per modality, validated to be consistent across videos.
std::map<Modality, std::size_t> dataset_feature_dims(const LoadedDataset& dataset,
                                                     const std::vector<Modality>& modalities);

} // namespace tgvad
