#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tgvad/encoders.hpp"
#include "tgvad/tensor.hpp"

namespace tgvad {

// ---------------------------------------------------------------------------
// Binary feature files
//
// Layout (little-endian): magic "MVADFEAT" (8 bytes), format version (u32),
// rows (u32), cols (u32), frames_per_snippet (u32), then rows*cols IEEE-754
// 32-bit floats, row-major. Internally values are widened to 64-bit.
// ---------------------------------------------------------------------------

constexpr std::uint32_t kFeatureFileVersion = 1;

void write_feature_file(const std::string& path, const Tensor& matrix,
                        std::size_t frames_per_snippet);
SnippetFeatures read_feature_file(const std::string& path, Modality modality);

// ---------------------------------------------------------------------------
// Caption stores (JSON lines, one sample per line)
// ---------------------------------------------------------------------------

enum class CaptionStage { Original, Summary, Annotated, Generated };

const char* caption_stage_name(CaptionStage stage);
CaptionStage caption_stage_from_name(const std::string& name);

struct CaptionSample {
    std::string text;
    std::optional<std::string> video_id;
    std::optional<std::size_t> snippet_index;
    CaptionStage stage = CaptionStage::Original;
    std::optional<double> label; // pseudo-labels may be fractional
    bool duplicate = false;      // set when a generated sample repeats the pool
};

void write_captions(const std::string& path, const std::vector<CaptionSample>& samples);
std::vector<CaptionSample> read_captions(const std::string& path);

// ---------------------------------------------------------------------------
// Dataset manifest (JSON)
// ---------------------------------------------------------------------------

struct VideoRecord {
    std::string id;
    std::string split; // "train" or "test"
    std::optional<int> label;
    std::map<Modality, std::string> feature_paths; // relative to the manifest
    std::optional<std::string> caption_path;
    std::optional<std::string> frame_label_path; // test videos only

    bool is_train() const { return split == "train"; }
};

struct DatasetManifest {
    std::vector<VideoRecord> videos;
    std::string root; // directory of the manifest file

    std::string resolve(const std::string& relative) const;
    std::vector<const VideoRecord*> split(const std::string& name) const;
};

void write_manifest(const std::string& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::string& path);

// ---------------------------------------------------------------------------
// Frame labels (one 0/1 per line) and score curves (CSV)
// ---------------------------------------------------------------------------

void write_frame_labels(const std::string& path, const std::vector<int>& labels);
std::vector<int> read_frame_labels(const std::string& path);

struct ScoreRow {
    std::string video_id;
    std::size_t snippet_index = 0;
    double fused = 0.0;                // s
    std::optional<double> text;        // p
    double final_score = 0.0;          // s_hat
};

void write_score_csv(const std::string& path, const std::vector<ScoreRow>& rows);
std::vector<ScoreRow> read_score_csv(const std::string& path);

void write_loss_trace(const std::string& path, const std::vector<double>& losses);

} // namespace tgvad
