#include "tgvad/msta.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <set>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "tgvad/errors.hpp"
#include "tgvad/rng.hpp"
#include "tgvad/synth.hpp"

namespace tgvad {

namespace {

constexpr std::uint64_t kStage2Tag = 0x5742;
constexpr std::uint64_t kStage3Tag = 0x5743;

std::string trim_text(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) {
        return "";
    }
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string current;
    for (char c : text) {
        if (c == '\n') {
            lines.push_back(current);
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    lines.push_back(current);
    return lines;
}

std::string first_sentence(const std::string& text) {
    const auto pos = text.find_first_of(".!?");
    if (pos == std::string::npos) {
        return trim_text(text);
    }
    return trim_text(text.substr(0, pos + 1));
}

} // namespace

PromptTemplates PromptTemplates::defaults() {
    PromptTemplates t;
    t.summarize =
        "Please summarize the following sentences into a single sentence of no more than 30 "
        "words. Please just output the summarized sentence without additional details or "
        "introductions, just one sentence.";
    t.video_description = "Video description:";
    t.anomaly_score = "Anomaly score:";
    t.annotate =
        "Each element in the following list contains a description of a video and the "
        "corresponding anomaly score. The anomaly score indicates the probability of an "
        "anomalous event occurring in the video. Just complete the last space of the correct "
        "anomaly score.";
    t.example = "Example:";
    t.generate =
        "Each element in the following list contains a description of a video snippet whose "
        "category is abnormal events. Just generate one sentence in the same category as the "
        "above sentences.";
    return t;
}

MstaConfig msta_config(const RunConfig& cfg) {
    MstaConfig m;
    m.num_samplings = cfg.num_samplings;
    m.context_samples = cfg.context_samples;
    m.delta = cfg.delta;
    m.seed = cfg.seed;
    return m;
}

std::string join_prompt(const std::vector<std::string>& parts) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) {
            out.push_back('\n');
        }
        out += parts[i];
    }
    return out;
}

std::string format_score(double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", value);
    return buf;
}

std::string stage1_prompt(const PromptTemplates& templates,
                          const std::vector<std::string>& captions) {
    std::vector<std::string> parts{templates.summarize};
    parts.insert(parts.end(), captions.begin(), captions.end());
    return join_prompt(parts);
}

std::string stage2_context_item(const PromptTemplates& templates, const std::string& description,
                                double label) {
    return join_prompt(
        {templates.video_description, description, templates.anomaly_score, format_score(label)});
}

std::string stage2_prompt(const PromptTemplates& templates,
                          const std::vector<std::string>& context_items,
                          const std::string& target_caption) {
    std::vector<std::string> parts{templates.annotate};
    parts.insert(parts.end(), context_items.begin(), context_items.end());
    parts.push_back(target_caption);
    parts.push_back(templates.anomaly_score);
    return join_prompt(parts);
}

std::string stage3_prompt(const PromptTemplates& templates,
                          const std::vector<std::string>& example_texts) {
    std::vector<std::string> parts{templates.generate};
    for (const std::string& text : example_texts) {
        parts.push_back(join_prompt({templates.example, text}));
    }
    parts.push_back(templates.example);
    return join_prompt(parts);
}

std::optional<double> parse_first_number(const std::string& completion) {
    for (std::size_t i = 0; i < completion.size(); ++i) {
        const auto c = static_cast<unsigned char>(completion[i]);
        const bool digit = std::isdigit(c) != 0;
        const bool dot_then_digit = completion[i] == '.' && i + 1 < completion.size() &&
                                    std::isdigit(static_cast<unsigned char>(completion[i + 1]));
        if (digit || dot_then_digit) {
            std::size_t begin = i;
            if (begin > 0 && completion[begin - 1] == '-') {
                --begin; // a leading sign belongs to the literal
            }
            try {
                return std::stod(completion.substr(begin));
            } catch (const std::exception&) {
                return std::nullopt;
            }
        }
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// MockLlm
// ---------------------------------------------------------------------------

MockLlm::MockLlm(std::uint64_t seed, PromptTemplates templates)
    : seed_(seed), templates_(std::move(templates)) {}

std::string MockLlm::complete(const std::string& prompt) {
    const auto starts_with = [&](const std::string& prefix) {
        return prompt.rfind(prefix, 0) == 0;
    };

    if (starts_with(templates_.summarize)) {
        // Echo the first 30 words of the caption block.
        const auto body_at = prompt.find('\n');
        const std::string body = body_at == std::string::npos ? "" : prompt.substr(body_at + 1);
        std::string word;
        std::vector<std::string> words;
        for (char c : body) {
            if (std::isspace(static_cast<unsigned char>(c))) {
                if (!word.empty()) {
                    words.push_back(word);
                    word.clear();
                }
            } else {
                word.push_back(c);
            }
            if (words.size() == 30) {
                break;
            }
        }
        if (!word.empty() && words.size() < 30) {
            words.push_back(word);
        }
        std::string summary;
        for (std::size_t i = 0; i < words.size(); ++i) {
            if (i) {
                summary.push_back(' ');
            }
            summary += words[i];
        }
        return summary;
    }

    if (starts_with(templates_.annotate)) {
        const auto lines = split_lines(prompt);
        if (lines.size() < 2 || lines.back() != templates_.anomaly_score) {
            throw BackendError("mock backend: malformed annotation prompt");
        }
        const std::string& target = lines[lines.size() - 2];
        Rng rng(mix_seed(seed_, hash_text(prompt)));
        const double score = caption_mentions_anomaly(target) ? 0.8 + 0.2 * rng.uniform()
                                                              : 0.15 * rng.uniform();
        return templates_.anomaly_score + " " + format_score(score);
    }

    if (starts_with(templates_.generate)) {
        Rng rng(mix_seed(seed_, hash_text(prompt)));
        return make_caption(true, rng) + ".";
    }

    throw BackendError("mock backend cannot serve this prompt");
}

// ---------------------------------------------------------------------------
// RemoteLlm
// ---------------------------------------------------------------------------

RemoteLlmConfig RemoteLlmConfig::from_environment() {
    RemoteLlmConfig cfg;
    if (const char* endpoint = std::getenv("TGVAD_LLM_ENDPOINT")) {
        cfg.endpoint = endpoint;
    }
    if (const char* key = std::getenv("TGVAD_LLM_API_KEY")) {
        cfg.api_key = key;
    }
    if (const char* model = std::getenv("TGVAD_LLM_MODEL")) {
        cfg.model = model;
    }
    return cfg;
}

RemoteLlm::RemoteLlm(RemoteLlmConfig config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) {
        throw ConfigError("remote backend requires TGVAD_LLM_ENDPOINT");
    }
}

std::string RemoteLlm::complete(const std::string& prompt) {
    nlohmann::json body;
    body["model"] = config_.model.empty() ? "default" : config_.model;
    body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", prompt}}});

    httplib::Client client(config_.endpoint);
    client.set_read_timeout(120, 0);
    httplib::Headers headers;
    if (!config_.api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + config_.api_key);
    }

    std::string last_error;
    for (int attempt = 0; attempt < 2; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(500 << attempt));
        }
        auto res = client.Post("/v1/chat/completions", headers, body.dump(), "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "HTTP status " + std::to_string(res->status);
            continue;
        }
        try {
            const auto parsed = nlohmann::json::parse(res->body);
            return parsed.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const std::exception& e) {
            last_error = std::string("malformed completion payload: ") + e.what();
        }
    }
    throw BackendError("remote backend at '" + config_.endpoint + "' failed: " + last_error);
}

std::unique_ptr<LlmBackend> make_backend(const std::string& kind, std::uint64_t seed,
                                         const PromptTemplates& templates) {
    if (kind == "mock") {
        return std::make_unique<MockLlm>(seed, templates);
    }
    if (kind == "remote") {
        return std::make_unique<RemoteLlm>(RemoteLlmConfig::from_environment());
    }
    throw ConfigError("unknown backend '" + kind + "' (expected mock or remote)");
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

CaptionSample stage1_summarize(const std::vector<CaptionSample>& video_captions, int video_label,
                               const std::string& video_id, const PromptTemplates& templates,
                               LlmBackend& backend) {
    if (video_captions.empty()) {
        throw ContractError("video '" + video_id + "' has no captions to summarize");
    }
    std::vector<std::string> texts;
    texts.reserve(video_captions.size());
    for (const CaptionSample& c : video_captions) {
        texts.push_back(c.text);
    }
    std::string completion;
    try {
        completion = backend.complete(stage1_prompt(templates, texts));
    } catch (const BackendError& e) {
        throw BackendError("summarizing video '" + video_id + "': " + e.what());
    }
    CaptionSample summary;
    summary.text = trim_text(completion);
    summary.video_id = video_id;
    summary.stage = CaptionStage::Summary;
    summary.label = video_label ? 1.0 : 0.0;
    return summary;
}

std::optional<double> stage2_annotate(const std::string& caption_text,
                                      std::size_t caption_ordinal,
                                      const std::vector<CaptionSample>& summary_pool,
                                      const MstaConfig& cfg, const PromptTemplates& templates,
                                      LlmBackend& backend) {
    if (summary_pool.size() < cfg.context_samples) {
        throw ConfigError("Stage-II needs " + std::to_string(cfg.context_samples) +
                          " context samples, but the summary pool holds only " +
                          std::to_string(summary_pool.size()));
    }
    std::vector<double> scores;
    for (std::size_t k = 0; k < cfg.num_samplings; ++k) {
        for (int attempt = 0; attempt < 2; ++attempt) {
            Rng rng(mix_seed(cfg.seed, kStage2Tag, caption_ordinal,
                             k * 2 + static_cast<std::size_t>(attempt)));
            const auto picks =
                rng.sample_without_replacement(summary_pool.size(), cfg.context_samples);
            std::vector<std::string> items;
            items.reserve(picks.size());
            for (std::size_t idx : picks) {
                const CaptionSample& s = summary_pool[idx];
                if (!s.label) {
                    throw ContractError("Stage-II context samples must carry labels");
                }
                items.push_back(stage2_context_item(templates, s.text, *s.label));
            }
            const std::string completion =
                backend.complete(stage2_prompt(templates, items, caption_text));
            if (const auto parsed = parse_first_number(completion)) {
                scores.push_back(std::clamp(*parsed, 0.0, 1.0));
                break;
            }
        }
    }
    if (scores.empty()) {
        return std::nullopt;
    }
    double total = 0.0;
    for (double s : scores) {
        total += s;
    }
    return std::clamp(total / static_cast<double>(scores.size()), 0.0, 1.0);
}

std::vector<CaptionSample> filter_anomaly_pool(const std::vector<CaptionSample>& annotated,
                                               double delta) {
    std::vector<CaptionSample> pool;
    for (const CaptionSample& s : annotated) {
        if (s.label && *s.label > delta) { // strictly greater
            pool.push_back(s);
        }
    }
    return pool;
}

std::vector<CaptionSample> stage3_generate(const std::vector<CaptionSample>& anomaly_pool,
                                           std::size_t count, const MstaConfig& cfg,
                                           const PromptTemplates& templates,
                                           LlmBackend& backend) {
    if (count == 0) {
        return {};
    }
    if (anomaly_pool.size() < cfg.context_samples) {
        throw ConfigError("Stage-III needs " + std::to_string(cfg.context_samples) +
                          " context samples, but the anomaly pool holds only " +
                          std::to_string(anomaly_pool.size()));
    }
    std::set<std::string> seen;
    for (const CaptionSample& s : anomaly_pool) {
        seen.insert(s.text);
    }
    std::vector<CaptionSample> generated;
    generated.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::string text;
        bool duplicate = true;
        for (int attempt = 0; attempt < 3; ++attempt) {
            Rng rng(mix_seed(cfg.seed, kStage3Tag, i, static_cast<std::size_t>(attempt)));
            const auto picks =
                rng.sample_without_replacement(anomaly_pool.size(), cfg.context_samples);
            std::vector<std::string> examples;
            examples.reserve(picks.size());
            for (std::size_t idx : picks) {
                examples.push_back(anomaly_pool[idx].text);
            }
            text = first_sentence(backend.complete(stage3_prompt(templates, examples)));
            if (!seen.count(text)) {
                duplicate = false;
                break;
            }
        }
        seen.insert(text);
        CaptionSample sample;
        sample.text = text;
        sample.stage = CaptionStage::Generated;
        sample.label = 1.0;
        sample.duplicate = duplicate;
        generated.push_back(std::move(sample));
    }
    return generated;
}

// ---------------------------------------------------------------------------
// Dataset-level pipeline
// ---------------------------------------------------------------------------

std::vector<CaptionSample> summarize_dataset(const DatasetManifest& manifest,
                                             const PromptTemplates& templates,
                                             LlmBackend& backend) {
    std::vector<CaptionSample> summaries;
    for (const VideoRecord* video : manifest.split("train")) {
        if (!video->caption_path) {
            throw ContractError("training video '" + video->id + "' has no caption file");
        }
        const auto captions = read_captions(manifest.resolve(*video->caption_path));
        summaries.push_back(
            stage1_summarize(captions, *video->label, video->id, templates, backend));
    }
    return summaries;
}

std::vector<CaptionSample> annotate_dataset(const DatasetManifest& manifest,
                                            const std::vector<CaptionSample>& summaries,
                                            const MstaConfig& cfg,
                                            const PromptTemplates& templates,
                                            LlmBackend& backend) {
    std::vector<CaptionSample> annotated;
    std::size_t ordinal = 0;
    for (const VideoRecord* video : manifest.split("train")) {
        if (!video->caption_path) {
            throw ContractError("training video '" + video->id + "' has no caption file");
        }
        for (const CaptionSample& caption :
             read_captions(manifest.resolve(*video->caption_path))) {
            CaptionSample out = caption;
            out.stage = CaptionStage::Annotated;
            out.label =
                stage2_annotate(caption.text, ordinal++, summaries, cfg, templates, backend);
            annotated.push_back(std::move(out));
        }
    }
    return annotated;
}

std::vector<CaptionSample> generate_dataset(const std::vector<CaptionSample>& annotated,
                                            const std::vector<CaptionSample>& summaries,
                                            std::optional<std::size_t> count,
                                            const MstaConfig& cfg,
                                            const PromptTemplates& templates,
                                            LlmBackend& backend) {
    std::size_t resolved;
    if (count) {
        resolved = *count;
    } else {
        // Balance the labeled pool: one generated positive per missing one.
        std::size_t positives = 0;
        std::size_t negatives = 0;
        for (const auto* set : {&summaries, &annotated}) {
            for (const CaptionSample& s : *set) {
                if (!s.label) {
                    continue;
                }
                (*s.label > 0.5 ? positives : negatives) += 1;
            }
        }
        resolved = negatives > positives ? negatives - positives : 0;
    }
    return stage3_generate(filter_anomaly_pool(annotated, cfg.delta), resolved, cfg, templates,
                           backend);
}

} // namespace tgvad
