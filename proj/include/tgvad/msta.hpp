#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tgvad/config.hpp"
#include "tgvad/data_io.hpp"

namespace tgvad {

/// The instruction strings used to drive the LLM. Defaults are fixed;
/// overriding them changes every assembled prompt, which is why prompt
/// assembly is covered by golden-file tests.
struct PromptTemplates {
    std::string summarize;         // Stage-I instruction
    std::string video_description; // context item header
    std::string anomaly_score;     // score header / completion cue
    std::string annotate;          // Stage-II instruction
    std::string example;           // Stage-III item header
    std::string generate;          // Stage-III instruction

    static PromptTemplates defaults();
};

struct MstaConfig {
    std::size_t num_samplings = 10;   // N_S
    std::size_t context_samples = 80; // N_R
    double delta = 0.7;               // anomaly threshold for the Stage-III pool
    std::uint64_t seed = 7;
};

MstaConfig msta_config(const RunConfig& cfg);

// ---------------------------------------------------------------------------
// Prompt assembly. Texts are concatenated with single newlines.
// ---------------------------------------------------------------------------

std::string join_prompt(const std::vector<std::string>& parts);
/// Labels and scores are rendered with two decimals ("0.00", "0.85").
std::string format_score(double value);

std::string stage1_prompt(const PromptTemplates& templates,
                          const std::vector<std::string>& captions);
std::string stage2_context_item(const PromptTemplates& templates, const std::string& description,
                                double label);
std::string stage2_prompt(const PromptTemplates& templates,
                          const std::vector<std::string>& context_items,
                          const std::string& target_caption);
std::string stage3_prompt(const PromptTemplates& templates,
                          const std::vector<std::string>& example_texts);

/// First decimal literal in an LLM completion, or nullopt. The caller clamps
/// to [0, 1]; this is the whole contract with arbitrary backend output.
std::optional<double> parse_first_number(const std::string& completion);

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    virtual std::string complete(const std::string& prompt) = 0;
    virtual std::string name() const = 0;
};

/// Deterministic stand-in for a hosted model: summaries echo the first 30
/// words, annotation scores follow the anomaly lexicon of the synthetic
/// caption vocabulary, and generation samples fresh anomaly captions. The
/// completion is a pure function of (seed, prompt).
class MockLlm : public LlmBackend {
public:
    MockLlm(std::uint64_t seed, PromptTemplates templates);
    std::string complete(const std::string& prompt) override;
    std::string name() const override { return "mock"; }

private:
    std::uint64_t seed_;
    PromptTemplates templates_;
};

struct RemoteLlmConfig {
    std::string endpoint; // base URL, e.g. http://localhost:8000
    std::string api_key;
    std::string model;

    /// Reads TGVAD_LLM_ENDPOINT / TGVAD_LLM_API_KEY / TGVAD_LLM_MODEL.
    static RemoteLlmConfig from_environment();
};

/// Chat-completion client (JSON over HTTP) with one retry and exponential
/// backoff on transport errors.
class RemoteLlm : public LlmBackend {
public:
    explicit RemoteLlm(RemoteLlmConfig config);
    std::string complete(const std::string& prompt) override;
    std::string name() const override { return "remote"; }

private:
    RemoteLlmConfig config_;
};

/// "mock" or "remote"; remote settings come from the environment.
std::unique_ptr<LlmBackend> make_backend(const std::string& kind, std::uint64_t seed,
                                         const PromptTemplates& templates);

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

/// Stage-I for one video: summarize its captions; the summary inherits the
/// binary video label.
CaptionSample stage1_summarize(const std::vector<CaptionSample>& video_captions, int video_label,
                               const std::string& video_id, const PromptTemplates& templates,
                               LlmBackend& backend);

/// Stage-II for one caption: N_S sampling rounds, each over N_R summaries
/// drawn without replacement, averaged. An unparseable completion is retried
/// once with a fresh draw, then the round is skipped; nullopt when every
/// round skipped. caption_ordinal keys the random substream, so annotating
/// captions concurrently would still commit identical results.
std::optional<double> stage2_annotate(const std::string& caption_text,
                                      std::size_t caption_ordinal,
                                      const std::vector<CaptionSample>& summary_pool,
                                      const MstaConfig& cfg, const PromptTemplates& templates,
                                      LlmBackend& backend);

/// Captions whose pseudo-label strictly exceeds delta.
std::vector<CaptionSample> filter_anomaly_pool(const std::vector<CaptionSample>& annotated,
                                               double delta);

/// Stage-III: generates `count` anomaly descriptions (label 1.0) from the
/// anomaly pool. Exact duplicates of the pool or of earlier generations are
/// redrawn up to 3 tries, then kept flagged.
std::vector<CaptionSample> stage3_generate(const std::vector<CaptionSample>& anomaly_pool,
                                           std::size_t count, const MstaConfig& cfg,
                                           const PromptTemplates& templates, LlmBackend& backend);

// ---------------------------------------------------------------------------
// Dataset-level pipeline (training split only)
// ---------------------------------------------------------------------------

std::vector<CaptionSample> summarize_dataset(const DatasetManifest& manifest,
                                             const PromptTemplates& templates,
                                             LlmBackend& backend);

std::vector<CaptionSample> annotate_dataset(const DatasetManifest& manifest,
                                            const std::vector<CaptionSample>& summaries,
                                            const MstaConfig& cfg,
                                            const PromptTemplates& templates,
                                            LlmBackend& backend);

/// Resolves the sample count (nullopt = balance the labeled pool: negatives
/// minus positives at threshold 0.5 over summaries plus annotated) and runs
/// Stage-III over the delta-filtered annotated pool.
std::vector<CaptionSample> generate_dataset(const std::vector<CaptionSample>& annotated,
                                            const std::vector<CaptionSample>& summaries,
                                            std::optional<std::size_t> count,
                                            const MstaConfig& cfg,
                                            const PromptTemplates& templates,
                                            LlmBackend& backend);

} // namespace tgvad
