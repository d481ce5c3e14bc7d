#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tgvad/config.hpp"
#include "tgvad/encoders.hpp"
#include "tgvad/rng.hpp"
#include "tgvad/text.hpp"

namespace tgvad {

struct SynthSpec {
    std::size_t train_normal = 20;
    std::size_t train_abnormal = 20;
    std::size_t test_normal = 10;
    std::size_t test_abnormal = 10;
    std::size_t snippets_min = 14;
    std::size_t snippets_max = 20;
    std::size_t frames_per_snippet = 16;
    std::map<Modality, std::size_t> feature_dims; // non-text modalities
    std::vector<Modality> modalities;
    double strength = 3.0;       // mean shift applied inside anomalous spans
    double span_min = 0.4;       // anomalous span, as a fraction of the video
    double span_max = 0.7;
    std::size_t text_dim = 64;   // width of written text features
    std::uint64_t seed = 7;

    void validate() const;
};

SynthSpec synth_spec(const RunConfig& cfg);

/// Writes a complete dataset (manifest, feature files, captions, frame
/// labels) under out_dir. Normal videos draw every snippet from the
/// background distribution; abnormal videos carry one contiguous span whose
/// mean is shifted along a fixed per-modality direction. Captions follow the
/// span, so at strength zero the classes are indistinguishable in features
/// and text alike. Byte-identical for a fixed spec.
void generate_synthetic_dataset(const SynthSpec& spec, const std::string& out_dir,
                                const TextEmbedder* text_embedder = nullptr);

/// Caption vocabulary shared with the mock LLM backend.
const std::vector<std::string>& caption_subjects();
const std::vector<std::string>& caption_places();
const std::vector<std::string>& normal_caption_actions();
const std::vector<std::string>& anomaly_caption_actions();

std::string make_caption(bool anomalous, Rng& rng);
/// True when the text contains any word of the anomaly lexicon.
bool caption_mentions_anomaly(const std::string& text);

} // namespace tgvad
