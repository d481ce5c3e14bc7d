#include "tgvad/data_io.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tgvad/errors.hpp"
#include "tgvad/serialize.hpp"

namespace tgvad {

namespace {

constexpr char kFeatureMagic[8] = {'M', 'V', 'A', 'D', 'F', 'E', 'A', 'T'};

using nlohmann::json;

std::ifstream open_input(const std::string& path, std::ios::openmode mode = std::ios::in) {
    std::ifstream in(path, mode);
    if (!in) {
        throw IoError("cannot open '" + path + "'");
    }
    return in;
}

std::ofstream open_output(const std::string& path, std::ios::openmode mode = std::ios::out) {
    std::ofstream out(path, mode);
    if (!out) {
        throw IoError("cannot open '" + path + "' for writing");
    }
    return out;
}

/// Formats a double so the text survives a round-trip exactly.
std::string number_text(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

} // namespace

void write_feature_file(const std::string& path, const Tensor& matrix,
                        std::size_t frames_per_snippet) {
    if (matrix.rows() == 0 || matrix.cols() == 0) {
        throw ContractError("feature matrices must be non-empty");
    }
    if (frames_per_snippet == 0) {
        throw ContractError("frames_per_snippet must be at least 1");
    }
    auto out = open_output(path, std::ios::binary);
    write_bytes(out, kFeatureMagic, sizeof(kFeatureMagic));
    write_u32(out, kFeatureFileVersion);
    write_u32(out, static_cast<std::uint32_t>(matrix.rows()));
    write_u32(out, static_cast<std::uint32_t>(matrix.cols()));
    write_u32(out, static_cast<std::uint32_t>(frames_per_snippet));
    for (double v : matrix.values()) {
        write_f32(out, static_cast<float>(v));
    }
    if (!out) {
        throw IoError("failed writing feature file '" + path + "'");
    }
}

SnippetFeatures read_feature_file(const std::string& path, Modality modality) {
    auto in = open_input(path, std::ios::binary);
    std::size_t offset = 0;
    const auto magic = read_exact(in, sizeof(kFeatureMagic), offset, "magic");
    if (std::memcmp(magic.data(), kFeatureMagic, sizeof(kFeatureMagic)) != 0) {
        throw ParseError("'" + path + "': bad magic at byte offset 0, expected \"MVADFEAT\"");
    }
    const std::uint32_t version = read_u32(in, offset, "format version");
    if (version != kFeatureFileVersion) {
        throw ParseError("'" + path + "': unsupported format version " + std::to_string(version) +
                         " at byte offset 8 (expected " + std::to_string(kFeatureFileVersion) +
                         ")");
    }
    const std::uint32_t rows = read_u32(in, offset, "row count");
    const std::uint32_t cols = read_u32(in, offset, "column count");
    const std::uint32_t frames = read_u32(in, offset, "frames_per_snippet");
    if (rows == 0) {
        throw ParseError("'" + path + "': snippet count must be at least 1");
    }
    if (cols == 0) {
        throw ParseError("'" + path + "': feature dimension must be at least 1");
    }
    if (frames == 0) {
        throw ParseError("'" + path + "': frames_per_snippet must be at least 1");
    }
    const std::size_t expected = static_cast<std::size_t>(rows) * cols * 4;
    const std::size_t payload_offset = offset;
    const auto payload = read_exact(in, expected, offset, "feature payload");
    if (in.peek() != std::ifstream::traits_type::eof()) {
        throw ParseError("'" + path + "': trailing bytes after the payload at byte offset " +
                         std::to_string(payload_offset + expected));
    }
    Tensor matrix({rows, cols});
    for (std::size_t i = 0; i < matrix.size(); ++i) {
        std::uint32_t bits = static_cast<std::uint32_t>(payload[4 * i]) |
                             (static_cast<std::uint32_t>(payload[4 * i + 1]) << 8) |
                             (static_cast<std::uint32_t>(payload[4 * i + 2]) << 16) |
                             (static_cast<std::uint32_t>(payload[4 * i + 3]) << 24);
        float f;
        std::memcpy(&f, &bits, sizeof(f));
        matrix.values()[i] = static_cast<double>(f);
    }
    return SnippetFeatures{modality, std::move(matrix), frames};
}

const char* caption_stage_name(CaptionStage stage) {
    switch (stage) {
        case CaptionStage::Original: return "original";
        case CaptionStage::Summary: return "summary";
        case CaptionStage::Annotated: return "annotated";
        case CaptionStage::Generated: return "generated";
    }
    return "original";
}

CaptionStage caption_stage_from_name(const std::string& name) {
    if (name == "original") return CaptionStage::Original;
    if (name == "summary") return CaptionStage::Summary;
    if (name == "annotated") return CaptionStage::Annotated;
    if (name == "generated") return CaptionStage::Generated;
    throw ParseError("unknown caption stage '" + name + "'");
}

void write_captions(const std::string& path, const std::vector<CaptionSample>& samples) {
    auto out = open_output(path);
    for (const CaptionSample& s : samples) {
        json row;
        row["text"] = s.text;
        row["stage"] = caption_stage_name(s.stage);
        if (s.video_id) {
            row["video_id"] = *s.video_id;
        }
        if (s.snippet_index) {
            row["snippet_index"] = *s.snippet_index;
        }
        if (s.label) {
            row["label"] = *s.label;
        }
        if (s.duplicate) {
            row["duplicate"] = true;
        }
        out << row.dump() << "\n";
    }
    if (!out) {
        throw IoError("failed writing captions to '" + path + "'");
    }
}

std::vector<CaptionSample> read_captions(const std::string& path) {
    auto in = open_input(path);
    std::vector<CaptionSample> samples;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        json row;
        try {
            row = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": invalid JSON: " +
                             e.what());
        }
        CaptionSample s;
        if (!row.contains("text") || !row["text"].is_string()) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": missing 'text'");
        }
        s.text = row["text"].get<std::string>();
        s.stage = caption_stage_from_name(row.value("stage", "original"));
        if (row.contains("video_id")) {
            s.video_id = row["video_id"].get<std::string>();
        }
        if (row.contains("snippet_index")) {
            s.snippet_index = row["snippet_index"].get<std::size_t>();
        }
        if (row.contains("label")) {
            s.label = row["label"].get<double>();
        }
        s.duplicate = row.value("duplicate", false);
        samples.push_back(std::move(s));
    }
    return samples;
}

std::string DatasetManifest::resolve(const std::string& relative) const {
    if (relative.empty() || relative.front() == '/') {
        return relative;
    }
    return (std::filesystem::path(root) / relative).string();
}

std::vector<const VideoRecord*> DatasetManifest::split(const std::string& name) const {
    std::vector<const VideoRecord*> out;
    for (const auto& v : videos) {
        if (v.split == name) {
            out.push_back(&v);
        }
    }
    return out;
}

namespace {

void validate_record(const VideoRecord& v) {
    if (v.id.empty()) {
        throw ParseError("manifest entry with an empty id");
    }
    if (v.split != "train" && v.split != "test") {
        throw ParseError("video '" + v.id + "': split must be 'train' or 'test', got '" +
                         v.split + "'");
    }
    if (v.is_train() && !v.label) {
        throw ParseError("training video '" + v.id + "' has no video-level label");
    }
    if (!v.is_train() && !v.frame_label_path) {
        throw ParseError("test video '" + v.id + "' has no frame-level labels");
    }
    if (v.label && *v.label != 0 && *v.label != 1) {
        throw ParseError("video '" + v.id + "': label must be 0 or 1");
    }
}

} // namespace

void write_manifest(const std::string& path, const DatasetManifest& manifest) {
    json root;
    root["videos"] = json::array();
    for (const VideoRecord& v : manifest.videos) {
        validate_record(v);
        json entry;
        entry["id"] = v.id;
        entry["split"] = v.split;
        if (v.label) {
            entry["label"] = *v.label;
        }
        json feats;
        for (const auto& [modality, rel] : v.feature_paths) {
            feats[std::string(1, modality_code(modality))] = rel;
        }
        entry["features"] = feats;
        if (v.caption_path) {
            entry["captions"] = *v.caption_path;
        }
        if (v.frame_label_path) {
            entry["frame_labels"] = *v.frame_label_path;
        }
        root["videos"].push_back(entry);
    }
    auto out = open_output(path);
    out << root.dump(2) << "\n";
    if (!out) {
        throw IoError("failed writing manifest to '" + path + "'");
    }
}

DatasetManifest read_manifest(const std::string& path) {
    auto in = open_input(path);
    json root;
    try {
        in >> root;
    } catch (const json::parse_error& e) {
        throw ParseError("manifest '" + path + "': invalid JSON: " + e.what());
    }
    if (!root.contains("videos") || !root["videos"].is_array()) {
        throw ParseError("manifest '" + path + "': missing 'videos' array");
    }
    DatasetManifest manifest;
    manifest.root = std::filesystem::path(path).parent_path().string();
    for (const auto& entry : root["videos"]) {
        VideoRecord v;
        v.id = entry.value("id", "");
        v.split = entry.value("split", "");
        if (entry.contains("label")) {
            v.label = entry["label"].get<int>();
        }
        if (entry.contains("features")) {
            for (const auto& [code, rel] : entry["features"].items()) {
                if (code.size() != 1) {
                    throw ParseError("video '" + v.id + "': bad modality code '" + code + "'");
                }
                v.feature_paths[modality_from_code(code[0])] = rel.get<std::string>();
            }
        }
        if (entry.contains("captions")) {
            v.caption_path = entry["captions"].get<std::string>();
        }
        if (entry.contains("frame_labels")) {
            v.frame_label_path = entry["frame_labels"].get<std::string>();
        }
        validate_record(v);
        manifest.videos.push_back(std::move(v));
    }
    return manifest;
}

void write_frame_labels(const std::string& path, const std::vector<int>& labels) {
    auto out = open_output(path);
    for (int label : labels) {
        if (label != 0 && label != 1) {
            throw ContractError("frame labels must be 0 or 1");
        }
        out << label << "\n";
    }
    if (!out) {
        throw IoError("failed writing frame labels to '" + path + "'");
    }
}

std::vector<int> read_frame_labels(const std::string& path) {
    auto in = open_input(path);
    std::vector<int> labels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        if (line == "0") {
            labels.push_back(0);
        } else if (line == "1") {
            labels.push_back(1);
        } else {
            throw ParseError(path + ":" + std::to_string(line_no) +
                             ": expected 0 or 1, got '" + line + "'");
        }
    }
    return labels;
}

void write_score_csv(const std::string& path, const std::vector<ScoreRow>& rows) {
    auto out = open_output(path);
    out << "video_id,snippet_index,s,p,s_hat\n";
    for (const ScoreRow& row : rows) {
        out << row.video_id << "," << row.snippet_index << "," << number_text(row.fused) << ",";
        if (row.text) {
            out << number_text(*row.text);
        }
        out << "," << number_text(row.final_score) << "\n";
    }
    if (!out) {
        throw IoError("failed writing scores to '" + path + "'");
    }
}

std::vector<ScoreRow> read_score_csv(const std::string& path) {
    auto in = open_input(path);
    std::string line;
    if (!std::getline(in, line) || line != "video_id,snippet_index,s,p,s_hat") {
        throw ParseError("score file '" + path + "' is missing the expected CSV header");
    }
    std::vector<ScoreRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> fields;
        std::string field;
        std::istringstream fields_in(line);
        while (std::getline(fields_in, field, ',')) {
            fields.push_back(field);
        }
        if (line.back() == ',') {
            fields.push_back("");
        }
        if (fields.size() != 5) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected 5 fields, got " +
                             std::to_string(fields.size()));
        }
        try {
            ScoreRow row;
            row.video_id = fields[0];
            row.snippet_index = static_cast<std::size_t>(std::stoull(fields[1]));
            row.fused = std::stod(fields[2]);
            if (!fields[3].empty()) {
                row.text = std::stod(fields[3]);
            }
            row.final_score = std::stod(fields[4]);
            rows.push_back(std::move(row));
        } catch (const std::exception&) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": malformed score row");
        }
    }
    return rows;
}

void write_loss_trace(const std::string& path, const std::vector<double>& losses) {
    auto out = open_output(path);
    out << "step,loss\n";
    for (std::size_t i = 0; i < losses.size(); ++i) {
        out << i << "," << number_text(losses[i]) << "\n";
    }
    if (!out) {
        throw IoError("failed writing loss trace to '" + path + "'");
    }
}

} // namespace tgvad
