#include "tgvad/synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>

#include "tgvad/data_io.hpp"
#include "tgvad/errors.hpp"

namespace tgvad {

namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kDirectionTag = 0xd127;
constexpr std::uint64_t kVideoTag = 0x51de0;

const std::vector<std::string>& anomaly_lexicon() {
    static const std::vector<std::string> words{
        "fight", "smash", "fire",  "attack", "steal", "gun",
        "explos", "crash", "riot", "rob",    "violent",
    };
    return words;
}

std::string lowercase(const std::string& text) {
    std::string out = text;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

/// Fixed per-modality unit direction with strictly positive entries, so a
/// shifted span also moves the per-snippet mean.
std::vector<double> anomaly_direction(std::uint64_t seed, Modality modality, std::size_t dim) {
    Rng rng(mix_seed(seed, kDirectionTag, static_cast<std::uint64_t>(modality_code(modality))));
    std::vector<double> dir(dim);
    double norm = 0.0;
    for (double& v : dir) {
        v = 0.3 + std::fabs(rng.normal());
        norm += v * v;
    }
    const double inv = 1.0 / std::sqrt(norm);
    for (double& v : dir) {
        v *= inv;
    }
    return dir;
}

struct VideoPlan {
    std::string id;
    std::string split;
    int label = 0;
    std::size_t index = 0;
};

} // namespace

void SynthSpec::validate() const {
    if (train_normal < 2 || train_abnormal < 2) {
        throw ConfigError("the synthetic training split needs at least 2 videos per class");
    }
    if (test_normal < 1 || test_abnormal < 1) {
        throw ConfigError("the synthetic test split needs at least 1 video per class");
    }
    if (snippets_min == 0 || snippets_max < snippets_min) {
        throw ConfigError("snippet range is empty");
    }
    if (frames_per_snippet == 0) {
        throw ConfigError("frames_per_snippet must be at least 1");
    }
    if (span_min <= 0.0 || span_max > 1.0 || span_max < span_min) {
        throw ConfigError("span fraction range must satisfy 0 < min <= max <= 1");
    }
    if (strength < 0.0) {
        throw ConfigError("anomaly strength must be non-negative");
    }
    if (modalities.empty()) {
        throw ConfigError("at least one modality is required");
    }
    for (Modality m : modalities) {
        if (m != Modality::Text && !feature_dims.count(m)) {
            throw ConfigError("no feature dim configured for modality '" + modality_name(m) +
                              "'");
        }
    }
    if (std::count(modalities.begin(), modalities.end(), Modality::Text) && text_dim == 0) {
        throw ConfigError("text_dim must be positive when the text modality is generated");
    }
}

SynthSpec synth_spec(const RunConfig& cfg) {
    SynthSpec spec;
    spec.train_normal = cfg.synth_train_normal;
    spec.train_abnormal = cfg.synth_train_abnormal;
    spec.test_normal = cfg.synth_test_normal;
    spec.test_abnormal = cfg.synth_test_abnormal;
    spec.snippets_min = cfg.synth_snippets_min;
    spec.snippets_max = cfg.synth_snippets_max;
    spec.frames_per_snippet = cfg.synth_frames_per_snippet;
    spec.feature_dims = {{Modality::Rgb, cfg.synth_dim_rgb},
                         {Modality::Flow, cfg.synth_dim_flow},
                         {Modality::Audio, cfg.synth_dim_audio}};
    spec.modalities = cfg.modality_set();
    spec.strength = cfg.synth_strength;
    spec.span_min = cfg.synth_span_min;
    spec.span_max = cfg.synth_span_max;
    spec.text_dim = cfg.text_dim;
    spec.seed = cfg.seed;
    return spec;
}

const std::vector<std::string>& caption_subjects() {
    static const std::vector<std::string> items{
        "a man",           "a woman",          "two men",          "a group of people",
        "a cyclist",       "an elderly couple", "a security guard", "several students",
    };
    return items;
}

const std::vector<std::string>& caption_places() {
    static const std::vector<std::string> items{
        "near the station",    "in the parking lot", "along the main street",
        "outside the mall",    "by the river bank",  "inside the subway",
        "at the crossing",     "under the bridge",
    };
    return items;
}

const std::vector<std::string>& normal_caption_actions() {
    static const std::vector<std::string> items{
        "walks calmly",      "strolls",            "waits quietly", "chats with a friend",
        "carries groceries", "takes photographs",  "jogs",          "pushes a stroller",
    };
    return items;
}

const std::vector<std::string>& anomaly_caption_actions() {
    static const std::vector<std::string> items{
        "starts a violent fight", "smashes a shop window", "sets a car on fire",
        "attacks a passerby",     "steals a handbag",      "fires a gun",
        "triggers an explosion",  "crashes a motorbike",
    };
    return items;
}

std::string make_caption(bool anomalous, Rng& rng) {
    const auto& subjects = caption_subjects();
    const auto& actions = anomalous ? anomaly_caption_actions() : normal_caption_actions();
    const auto& places = caption_places();
    return subjects[rng.index(subjects.size())] + " " + actions[rng.index(actions.size())] + " " +
           places[rng.index(places.size())];
}

bool caption_mentions_anomaly(const std::string& text) {
    const std::string lowered = lowercase(text);
    for (const std::string& stem : anomaly_lexicon()) {
        if (lowered.find(stem) != std::string::npos) {
            return true;
        }
    }
    return false;
}

void generate_synthetic_dataset(const SynthSpec& spec, const std::string& out_dir,
                                const TextEmbedder* text_embedder) {
    spec.validate();
    const bool wants_text =
        std::count(spec.modalities.begin(), spec.modalities.end(), Modality::Text) > 0;
    std::unique_ptr<TextEmbedder> fallback;
    if (wants_text && text_embedder == nullptr) {
        fallback = std::make_unique<HashedBowEmbedder>(spec.text_dim);
        text_embedder = fallback.get();
    }

    fs::create_directories(fs::path(out_dir) / "features");
    fs::create_directories(fs::path(out_dir) / "captions");
    fs::create_directories(fs::path(out_dir) / "frame_labels");

    std::vector<VideoPlan> plans;
    const auto add_plans = [&plans](const std::string& split, int label, std::size_t count) {
        for (std::size_t i = 0; i < count; ++i) {
            VideoPlan plan;
            std::string num = std::to_string(i);
            while (num.size() < 3) {
                num.insert(num.begin(), '0');
            }
            plan.id = split + (label ? "_anom_" : "_norm_") + num;
            plan.split = split;
            plan.label = label;
            plan.index = plans.size();
            plans.push_back(std::move(plan));
        }
    };
    add_plans("train", 0, spec.train_normal);
    add_plans("train", 1, spec.train_abnormal);
    add_plans("test", 0, spec.test_normal);
    add_plans("test", 1, spec.test_abnormal);

    std::map<Modality, std::vector<double>> directions;
    for (Modality m : spec.modalities) {
        if (m != Modality::Text) {
            directions[m] = anomaly_direction(spec.seed, m, spec.feature_dims.at(m));
        }
    }

    DatasetManifest manifest;
    manifest.root = out_dir;

    for (const VideoPlan& plan : plans) {
        Rng rng(mix_seed(spec.seed, kVideoTag, hash_text(plan.id)));
        const std::size_t n_t =
            static_cast<std::size_t>(rng.range(static_cast<long long>(spec.snippets_min),
                                               static_cast<long long>(spec.snippets_max)));

        std::size_t span_begin = 0;
        std::size_t span_len = 0;
        if (plan.label == 1) {
            const double frac = rng.uniform(spec.span_min, spec.span_max);
            span_len = std::clamp<std::size_t>(
                static_cast<std::size_t>(std::lround(frac * static_cast<double>(n_t))), 1, n_t);
            span_begin = rng.index(n_t - span_len + 1);
        }
        const auto in_span = [&](std::size_t snippet) {
            return plan.label == 1 && snippet >= span_begin && snippet < span_begin + span_len;
        };

        VideoRecord record;
        record.id = plan.id;
        record.split = plan.split;
        record.label = plan.label;

        for (Modality m : spec.modalities) {
            if (m == Modality::Text) {
                continue;
            }
            const std::size_t dim = spec.feature_dims.at(m);
            Tensor matrix({n_t, dim});
            for (std::size_t i = 0; i < n_t; ++i) {
                const double magnitude =
                    in_span(i) ? spec.strength * rng.uniform(0.9, 1.1) : 0.0;
                for (std::size_t j = 0; j < dim; ++j) {
                    matrix.at(i, j) = rng.normal() + magnitude * directions.at(m)[j];
                }
            }
            const std::string rel =
                "features/" + plan.id + "." + std::string(1, modality_code(m)) + ".feat";
            write_feature_file((fs::path(out_dir) / rel).string(), matrix,
                               spec.frames_per_snippet);
            record.feature_paths[m] = rel;
        }

        // Captions describe the observable content: anomalous wording only
        // inside a span that actually carries signal.
        std::vector<CaptionSample> captions;
        std::vector<std::vector<std::string>> per_snippet(n_t);
        for (std::size_t i = 0; i < n_t; ++i) {
            const bool anomalous = in_span(i) && spec.strength > 0.0;
            per_snippet[i].push_back(make_caption(anomalous, rng));
            if (rng.uniform() < 0.2) { // occasional second caption per snippet
                per_snippet[i].push_back(make_caption(anomalous, rng));
            }
            for (const std::string& text : per_snippet[i]) {
                CaptionSample sample;
                sample.text = text;
                sample.video_id = plan.id;
                sample.snippet_index = i;
                sample.stage = CaptionStage::Original;
                captions.push_back(std::move(sample));
            }
        }
        const std::string caption_rel = "captions/" + plan.id + ".jsonl";
        write_captions((fs::path(out_dir) / caption_rel).string(), captions);
        record.caption_path = caption_rel;

        if (wants_text) {
            Tensor text_matrix({n_t, text_embedder->dim()});
            for (std::size_t i = 0; i < n_t; ++i) {
                std::vector<double> mean(text_embedder->dim(), 0.0);
                for (const std::string& text : per_snippet[i]) {
                    const auto vec = text_embedder->embed(text);
                    for (std::size_t j = 0; j < mean.size(); ++j) {
                        mean[j] += vec[j];
                    }
                }
                for (std::size_t j = 0; j < mean.size(); ++j) {
                    text_matrix.at(i, j) = mean[j] / static_cast<double>(per_snippet[i].size());
                }
            }
            const std::string rel = "features/" + plan.id + ".T.feat";
            write_feature_file((fs::path(out_dir) / rel).string(), text_matrix,
                               spec.frames_per_snippet);
            record.feature_paths[Modality::Text] = rel;
        }

        if (plan.split == "test") {
            std::vector<int> frame_labels;
            frame_labels.reserve(n_t * spec.frames_per_snippet);
            for (std::size_t i = 0; i < n_t; ++i) {
                const int frame_label = in_span(i) ? 1 : 0;
                frame_labels.insert(frame_labels.end(), spec.frames_per_snippet, frame_label);
            }
            const std::string rel = "frame_labels/" + plan.id + ".txt";
            write_frame_labels((fs::path(out_dir) / rel).string(), frame_labels);
            record.frame_label_path = rel;
        }

        manifest.videos.push_back(std::move(record));
    }

    write_manifest((fs::path(out_dir) / "manifest.json").string(), manifest);
}

} // namespace tgvad
