#include "tgvad/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "tgvad/errors.hpp"
#include "tgvad/metrics.hpp"
#include "tgvad/rng.hpp"
#include "tgvad/serialize.hpp"

namespace tgvad {

namespace {

using nlohmann::json;

std::string modalities_string(const std::vector<Modality>& mods) {
    std::string out;
    for (Modality m : mods) {
        out.push_back(modality_code(m));
    }
    return out;
}

} // namespace

ModelConfig ModelConfig::from_run_config(const RunConfig& cfg,
                                         const std::map<Modality, std::size_t>& feature_dims) {
    ModelConfig model;
    model.modalities = cfg.modality_set();
    model.feature_dims = feature_dims;
    model.encoder = encoder_config(cfg);
    model.msbt = msbt_config(cfg);
    model.global_layers = cfg.global_layers;
    model.seed = cfg.seed;
    for (Modality m : model.modalities) {
        if (!feature_dims.count(m)) {
            throw ConfigError("no feature dimension known for modality '" + modality_name(m) +
                              "'");
        }
    }
    return model;
}

FusionModel::FusionModel(ModelConfig cfg) : cfg_(std::move(cfg)), store_(cfg_.seed) {
    cfg_.modalities = normalize_modalities(cfg_.modalities);
    std::map<Modality, std::size_t> dims;
    for (Modality m : cfg_.modalities) {
        auto it = cfg_.feature_dims.find(m);
        if (it == cfg_.feature_dims.end()) {
            throw ConfigError("no feature dimension for modality '" + modality_name(m) + "'");
        }
        dims.emplace(m, it->second);
    }
    encoder_ = std::make_unique<UnimodalEncoder>(store_, cfg_.encoder, dims);
    msbt_ = std::make_unique<Msbt>(store_, cfg_.msbt, cfg_.encoder, cfg_.modalities);
    scorer_ = std::make_unique<GlobalScorer>(store_, msbt_->fused_width(), cfg_.encoder.num_heads,
                                             cfg_.global_layers, cfg_.encoder.ffn_mult,
                                             cfg_.encoder.ffn_act);
}

Tensor FusionModel::score_video(Tape& tape,
                                const std::map<Modality, SnippetFeatures>& features) const {
    std::map<Modality, TokenSequence> encoded;
    std::size_t snippet_count = 0;
    for (Modality m : cfg_.modalities) {
        auto it = features.find(m);
        if (it == features.end()) {
            throw ContractError("video is missing features for modality '" + modality_name(m) +
                                "'");
        }
        if (snippet_count == 0) {
            snippet_count = it->second.matrix.rows();
        } else if (it->second.matrix.rows() != snippet_count) {
            throw AlignmentError("modality '" + modality_name(m) + "' has " +
                                 std::to_string(it->second.matrix.rows()) +
                                 " snippets, expected " + std::to_string(snippet_count));
        }
        encoded.emplace(m, encoder_->encode(tape, it->second));
    }
    const FusionOutput fused = msbt_->weight_and_concat(tape, msbt_->fuse_all(tape, encoded));
    return scorer_->score(tape, fused.weighted);
}

void FusionModel::save(const std::string& path) const {
    json header;
    header["kind"] = "tgvad-fusion-model";
    header["modalities"] = modalities_string(cfg_.modalities);
    json dims;
    for (const auto& [m, d] : cfg_.feature_dims) {
        dims[std::string(1, modality_code(m))] = d;
    }
    header["feature_dims"] = dims;
    header["embed_dim"] = cfg_.encoder.embed_dim;
    header["num_heads"] = cfg_.encoder.num_heads;
    header["encoder_layers"] = cfg_.encoder.num_layers;
    header["positional"] = cfg_.encoder.learned_positional;
    header["positional_table"] = cfg_.encoder.max_positions;
    header["ffn_mult"] = cfg_.encoder.ffn_mult;
    header["ffn_activation"] = activation_name(cfg_.encoder.ffn_act);
    header["fusion_layers"] = cfg_.msbt.fusion_layers;
    header["first_tokens"] = cfg_.msbt.first_tokens;
    header["weight_layers"] = cfg_.msbt.weight_layers;
    header["reduce_tokens"] = cfg_.msbt.reduce_tokens;
    header["cross_transformer"] = cfg_.msbt.use_cross_transformer;
    header["weighting"] = cfg_.msbt.weighting;
    header["softmax_weights"] = cfg_.msbt.softmax_weights;
    header["shared_pair_params"] = cfg_.msbt.shared_pair_params;
    header["global_layers"] = cfg_.global_layers;
    header["seed"] = cfg_.seed;

    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open '" + path + "' for writing");
    }
    const std::string blob = header.dump();
    write_u32(out, static_cast<std::uint32_t>(blob.size()));
    write_bytes(out, blob.data(), blob.size());
    store_.save(out);
    if (!out) {
        throw IoError("failed writing model to '" + path + "'");
    }
}

FusionModel FusionModel::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open model file '" + path + "'");
    }
    std::size_t offset = 0;
    const std::uint32_t header_len = read_u32(in, offset, "header length");
    const auto header_bytes = read_exact(in, header_len, offset, "model header");
    json header;
    try {
        header = json::parse(header_bytes.begin(), header_bytes.end());
    } catch (const json::parse_error& e) {
        throw ParseError("model file '" + path + "': invalid header: " + e.what());
    }
    if (header.value("kind", "") != "tgvad-fusion-model") {
        throw ParseError("'" + path + "' is not a fusion model file");
    }

    ModelConfig cfg;
    cfg.modalities = parse_modalities(header.at("modalities").get<std::string>());
    for (const auto& [code, d] : header.at("feature_dims").items()) {
        cfg.feature_dims[modality_from_code(code[0])] = d.get<std::size_t>();
    }
    cfg.encoder.embed_dim = header.at("embed_dim").get<std::size_t>();
    cfg.encoder.num_heads = header.at("num_heads").get<std::size_t>();
    cfg.encoder.num_layers = header.at("encoder_layers").get<std::size_t>();
    cfg.encoder.learned_positional = header.at("positional").get<bool>();
    cfg.encoder.max_positions = header.at("positional_table").get<std::size_t>();
    cfg.encoder.ffn_mult = header.at("ffn_mult").get<std::size_t>();
    cfg.encoder.ffn_act = activation_from_name(header.at("ffn_activation").get<std::string>());
    cfg.msbt.fusion_layers = header.at("fusion_layers").get<std::size_t>();
    cfg.msbt.first_tokens = header.at("first_tokens").get<std::size_t>();
    cfg.msbt.weight_layers = header.at("weight_layers").get<std::size_t>();
    cfg.msbt.reduce_tokens = header.at("reduce_tokens").get<bool>();
    cfg.msbt.use_cross_transformer = header.at("cross_transformer").get<bool>();
    cfg.msbt.weighting = header.at("weighting").get<bool>();
    cfg.msbt.softmax_weights = header.at("softmax_weights").get<bool>();
    cfg.msbt.shared_pair_params = header.at("shared_pair_params").get<bool>();
    cfg.global_layers = header.at("global_layers").get<std::size_t>();
    cfg.seed = header.at("seed").get<std::uint64_t>();

    FusionModel model(std::move(cfg));
    model.store_.load(in, offset, path);
    return model;
}

// ---------------------------------------------------------------------------
// Dataset loading
// ---------------------------------------------------------------------------

LoadedDataset load_dataset(const DatasetManifest& manifest,
                           const std::vector<Modality>& modalities) {
    LoadedDataset dataset;
    for (const VideoRecord& record : manifest.videos) {
        LoadedVideo video;
        video.id = record.id;
        video.label = record.label.value_or(0);
        for (Modality m : modalities) {
            auto it = record.feature_paths.find(m);
            if (it == record.feature_paths.end()) {
                throw ContractError("video '" + record.id + "' lists no feature file for "
                                    "modality '" + modality_name(m) + "'");
            }
            SnippetFeatures features = read_feature_file(manifest.resolve(it->second), m);
            if (video.snippet_count == 0) {
                video.snippet_count = features.matrix.rows();
                video.frames_per_snippet = features.frames_per_snippet;
            } else {
                if (features.matrix.rows() != video.snippet_count) {
                    throw AlignmentError("video '" + record.id + "': modality '" +
                                         modality_name(m) + "' has " +
                                         std::to_string(features.matrix.rows()) +
                                         " snippets, other modalities have " +
                                         std::to_string(video.snippet_count));
                }
                if (features.frames_per_snippet != video.frames_per_snippet) {
                    throw AlignmentError("video '" + record.id +
                                         "': frames_per_snippet differs across modalities");
                }
            }
            video.features.emplace(m, std::move(features));
        }
        if (record.caption_path) {
            video.captions = read_captions(manifest.resolve(*record.caption_path));
        }
        if (record.frame_label_path) {
            video.frame_labels = read_frame_labels(manifest.resolve(*record.frame_label_path));
            const std::size_t expected = video.snippet_count * video.frames_per_snippet;
            if (video.frame_labels.size() != expected) {
                throw AlignmentError("video '" + record.id + "': " +
                                     std::to_string(video.frame_labels.size()) +
                                     " frame labels for " + std::to_string(expected) +
                                     " frames");
            }
        }
        (record.is_train() ? dataset.train : dataset.test).push_back(std::move(video));
    }
    return dataset;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

TrainResult train_model(FusionModel& model, const std::vector<LoadedVideo>& train_videos,
                        const TrainConfig& cfg, const TrainHooks& hooks) {
    cfg.validate();
    if (train_videos.empty()) {
        throw ContractError("the training set is empty");
    }
    bool has_normal = false;
    bool has_abnormal = false;
    for (const LoadedVideo& v : train_videos) {
        (v.label ? has_abnormal : has_normal) = true;
    }
    if (!has_normal || !has_abnormal) {
        throw ContractError("training needs at least one normal and one abnormal video");
    }

    Rng rng(mix_seed(cfg.seed, 0x7a11));
    std::vector<std::size_t> order(train_videos.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::size_t cursor = order.size(); // forces an initial shuffle

    TrainResult result;
    result.loss_trace.reserve(cfg.train_steps);
    for (std::size_t step = 0; step < cfg.train_steps; ++step) {
        const std::size_t batch = std::min(cfg.batch_size, train_videos.size());
        std::vector<std::size_t> picked(batch);
        for (std::size_t i = 0; i < batch; ++i) {
            if (cursor == order.size()) {
                rng.shuffle(order);
                cursor = 0;
            }
            picked[i] = order[cursor++];
        }
        // Accumulation runs in video-id order, so a parallel forward pass
        // would commit the same sums.
        std::sort(picked.begin(), picked.end(), [&](std::size_t a, std::size_t b) {
            return train_videos[a].id < train_videos[b].id;
        });

        model.params().zero_grads();
        double batch_loss = 0.0;
        for (std::size_t idx : picked) {
            const LoadedVideo& video = train_videos[idx];
            Tape tape;
            Tensor scores = model.score_video(tape, video.features);
            Tensor mean_topk = tape.topk_mean(scores, cfg.top_k);
            Tensor loss = tape.scale(tape.bce(mean_topk, video.label ? 1.0 : 0.0),
                                     1.0 / static_cast<double>(batch));
            const double value = loss.item() * static_cast<double>(batch);
            if (!std::isfinite(value)) {
                throw NumericError("training loss diverged at step " + std::to_string(step) +
                                   " on video '" + video.id + "'");
            }
            batch_loss += value / static_cast<double>(batch);
            tape.backward(loss);
        }
        model.params().sgd_step(cfg.learning_rate);
        result.loss_trace.push_back(batch_loss);
        result.steps_run = step + 1;
        if (hooks.on_step) {
            hooks.on_step(step, batch_loss);
        }
        if (hooks.should_stop && hooks.should_stop(step)) {
            break;
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

std::vector<std::optional<double>> snippet_text_probabilities(
    const TextHead& head, const TextEmbedder& embedder,
    const std::vector<CaptionSample>& captions, std::size_t snippet_count) {
    std::vector<double> sums(snippet_count, 0.0);
    std::vector<std::size_t> counts(snippet_count, 0);
    for (const CaptionSample& caption : captions) {
        if (!caption.snippet_index || *caption.snippet_index >= snippet_count) {
            continue;
        }
        const double p = head.probability(embedder.embed(caption.text));
        sums[*caption.snippet_index] += p;
        counts[*caption.snippet_index] += 1;
    }
    std::vector<std::optional<double>> out(snippet_count);
    for (std::size_t i = 0; i < snippet_count; ++i) {
        if (counts[i] > 0) {
            // Multiple captions on one snippet average their probabilities.
            out[i] = sums[i] / static_cast<double>(counts[i]);
        }
    }
    return out;
}

EvalResult evaluate_model(const FusionModel& model, const std::vector<LoadedVideo>& test_videos,
                          const TextHead* head, const TextEmbedder* embedder, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) {
        throw ConfigError("alpha must lie in [0, 1], got " + std::to_string(alpha));
    }
    EvalResult result;
    std::vector<double> frame_scores;
    std::vector<int> frame_labels;
    for (const LoadedVideo& video : test_videos) {
        Tape tape;
        const Tensor scores = model.score_video(tape, video.features);
        const std::vector<double>& s = scores.values();

        std::vector<std::optional<double>> text_probs(video.snippet_count);
        if (head && embedder && !video.captions.empty()) {
            text_probs =
                snippet_text_probabilities(*head, *embedder, video.captions, video.snippet_count);
        }

        std::vector<double> final_scores(video.snippet_count);
        for (std::size_t i = 0; i < video.snippet_count; ++i) {
            final_scores[i] = text_probs[i] ? alpha * s[i] + (1.0 - alpha) * *text_probs[i]
                                            : s[i];
            ScoreRow row;
            row.video_id = video.id;
            row.snippet_index = i;
            row.fused = s[i];
            if (text_probs[i]) {
                row.text = *text_probs[i];
            }
            row.final_score = final_scores[i];
            result.rows.push_back(std::move(row));
        }

        if (!video.frame_labels.empty()) {
            const auto expanded = expand_to_frames(final_scores, video.frames_per_snippet);
            frame_scores.insert(frame_scores.end(), expanded.begin(), expanded.end());
            frame_labels.insert(frame_labels.end(), video.frame_labels.begin(),
                                video.frame_labels.end());
        }
    }
    if (frame_labels.empty()) {
        throw ContractError("no test video carries frame labels; cannot evaluate");
    }
    result.auc = frame_auc(frame_scores, frame_labels);
    result.ap = frame_ap(frame_scores, frame_labels);
    return result;
}

EvalResult evaluate_scores(const DatasetManifest& manifest, const std::vector<ScoreRow>& rows) {
    std::map<std::string, std::map<std::size_t, double>> by_video;
    for (const ScoreRow& row : rows) {
        by_video[row.video_id][row.snippet_index] = row.final_score;
    }
    EvalResult result;
    result.rows = rows;
    std::vector<double> frame_scores;
    std::vector<int> frame_labels;
    for (const VideoRecord* video : manifest.split("test")) {
        auto it = by_video.find(video->id);
        if (it == by_video.end()) {
            throw AlignmentError("score file has no rows for test video '" + video->id + "'");
        }
        const std::size_t snippets = it->second.size();
        std::vector<double> final_scores(snippets);
        for (std::size_t i = 0; i < snippets; ++i) {
            auto row = it->second.find(i);
            if (row == it->second.end()) {
                throw AlignmentError("score file misses snippet " + std::to_string(i) +
                                     " of video '" + video->id + "'");
            }
            final_scores[i] = row->second;
        }
        const auto labels = read_frame_labels(manifest.resolve(*video->frame_label_path));
        if (labels.empty() || labels.size() % snippets != 0) {
            throw AlignmentError("video '" + video->id + "': " + std::to_string(labels.size()) +
                                 " frame labels do not divide into " + std::to_string(snippets) +
                                 " snippets");
        }
        const auto expanded = expand_to_frames(final_scores, labels.size() / snippets);
        frame_scores.insert(frame_scores.end(), expanded.begin(), expanded.end());
        frame_labels.insert(frame_labels.end(), labels.begin(), labels.end());
    }
    if (frame_labels.empty()) {
        throw ContractError("the manifest lists no test videos; cannot evaluate");
    }
    result.auc = frame_auc(frame_scores, frame_labels);
    result.ap = frame_ap(frame_scores, frame_labels);
    return result;
}

std::map<Modality, std::size_t> dataset_feature_dims(const LoadedDataset& dataset,
                                                     const std::vector<Modality>& modalities) {
    std::map<Modality, std::size_t> dims;
    const auto scan = [&](const std::vector<LoadedVideo>& videos) {
        for (const LoadedVideo& video : videos) {
            for (Modality m : modalities) {
                const std::size_t width = video.features.at(m).matrix.cols();
                auto [it, inserted] = dims.emplace(m, width);
                if (!inserted && it->second != width) {
                    throw AlignmentError("modality '" + modality_name(m) +
                                         "' has width " + std::to_string(width) + " in video '" +
                                         video.id + "' but " + std::to_string(it->second) +
                                         " elsewhere");
                }
            }
        }
    };
    scan(dataset.train);
    scan(dataset.test);
    if (dims.empty()) {
        throw ContractError("the dataset is empty");
    }
    return dims;
}

} // namespace tgvad
