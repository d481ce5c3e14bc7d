#include "tgvad.h"

#include <memory>
#include <string>
#include <vector>

#include "tgvad/config.hpp"
#include "tgvad/data_io.hpp"
#include "tgvad/errors.hpp"
#include "tgvad/model.hpp"
#include "tgvad/msta.hpp"
#include "tgvad/synth.hpp"
#include "tgvad/text.hpp"

struct tgvad_session {
    tgvad::RunConfig config;
    std::string backend = "mock";
    std::string last_error;
};

namespace {

using namespace tgvad;

template <typename Fn>
tgvad_status guarded(tgvad_session* session, Fn&& fn) {
    if (!session) {
        return TGVAD_ERR_CONTRACT;
    }
    try {
        fn();
        session->last_error.clear();
        return TGVAD_OK;
    } catch (const DimensionError& e) {
        session->last_error = e.what();
        return TGVAD_ERR_DIMENSION;
    } catch (const AlignmentError& e) {
        session->last_error = e.what();
        return TGVAD_ERR_ALIGNMENT;
    } catch (const ConfigError& e) {
        session->last_error = e.what();
        return TGVAD_ERR_CONFIG;
    } catch (const ContractError& e) {
        session->last_error = e.what();
        return TGVAD_ERR_CONTRACT;
    } catch (const NumericError& e) {
        session->last_error = e.what();
        return TGVAD_ERR_NUMERIC;
    } catch (const ParseError& e) {
        session->last_error = e.what();
        return TGVAD_ERR_PARSE;
    } catch (const IoError& e) {
        session->last_error = e.what();
        return TGVAD_ERR_IO;
    } catch (const BackendError& e) {
        session->last_error = e.what();
        return TGVAD_ERR_BACKEND;
    } catch (const MetricError& e) {
        session->last_error = e.what();
        return TGVAD_ERR_METRIC;
    } catch (const std::exception& e) {
        session->last_error = e.what();
        return TGVAD_ERR_INTERNAL;
    }
}

std::string require(const char* value, const char* what) {
    if (!value) {
        throw ContractError(std::string(what) + " must not be null");
    }
    return value;
}

std::unique_ptr<TextEmbedder> make_embedder(const RunConfig& cfg) {
    if (cfg.embedder == "file") {
        return std::make_unique<FileEmbedder>(cfg.embedding_file);
    }
    return std::make_unique<HashedBowEmbedder>(cfg.text_dim);
}

TextHead load_text_head(const RunConfig& cfg, const std::string& path) {
    TextHead head(cfg.text_dim, cfg.text_head_hidden, cfg.seed);
    head.load(path);
    return head;
}

EvalResult run_eval(tgvad_session* session, const std::string& manifest_path,
                    const std::string& model_path, const char* text_head_path) {
    const DatasetManifest manifest = read_manifest(manifest_path);
    FusionModel model = FusionModel::load(model_path);
    const LoadedDataset dataset = load_dataset(manifest, model.config().modalities);
    std::unique_ptr<TextEmbedder> embedder;
    std::unique_ptr<TextHead> head;
    if (text_head_path) {
        embedder = make_embedder(session->config);
        head = std::make_unique<TextHead>(load_text_head(session->config, text_head_path));
    }
    return evaluate_model(model, dataset.test, head.get(), embedder.get(),
                          session->config.alpha);
}

} // namespace

extern "C" {

const char* tgvad_version(void) {
    return "0.1.0";
}

const char* tgvad_status_name(tgvad_status status) {
    switch (status) {
        case TGVAD_OK: return "ok";
        case TGVAD_ERR_DIMENSION: return "dimension";
        case TGVAD_ERR_ALIGNMENT: return "alignment";
        case TGVAD_ERR_CONFIG: return "config";
        case TGVAD_ERR_CONTRACT: return "contract";
        case TGVAD_ERR_NUMERIC: return "numeric";
        case TGVAD_ERR_PARSE: return "parse";
        case TGVAD_ERR_IO: return "io";
        case TGVAD_ERR_BACKEND: return "backend";
        case TGVAD_ERR_METRIC: return "metric";
        case TGVAD_ERR_INTERNAL: return "internal";
    }
    return "unknown";
}

tgvad_status tgvad_session_create(tgvad_session** out_session) {
    if (!out_session) {
        return TGVAD_ERR_CONTRACT;
    }
    *out_session = new (std::nothrow) tgvad_session();
    return *out_session ? TGVAD_OK : TGVAD_ERR_INTERNAL;
}

void tgvad_session_destroy(tgvad_session* session) {
    delete session;
}

const char* tgvad_last_error(const tgvad_session* session) {
    return session ? session->last_error.c_str() : "null session";
}

tgvad_status tgvad_load_config(tgvad_session* session, const char* path) {
    return guarded(session, [&] {
        session->config = read_run_config(require(path, "config path"));
    });
}

tgvad_status tgvad_set_option(tgvad_session* session, const char* key, const char* value) {
    return guarded(session, [&] {
        session->config.set(require(key, "option key"), require(value, "option value"));
        session->config.validate();
    });
}

tgvad_status tgvad_set_backend(tgvad_session* session, const char* kind) {
    return guarded(session, [&] {
        const std::string name = require(kind, "backend kind");
        if (name != "mock" && name != "remote") {
            throw ConfigError("unknown backend '" + name + "' (expected mock or remote)");
        }
        session->backend = name;
    });
}

tgvad_status tgvad_synth(tgvad_session* session, const char* out_dir) {
    return guarded(session, [&] {
        const SynthSpec spec = synth_spec(session->config);
        const auto embedder = make_embedder(session->config);
        generate_synthetic_dataset(spec, require(out_dir, "output directory"), embedder.get());
    });
}

tgvad_status tgvad_msta_summarize(tgvad_session* session, const char* manifest_path,
                                  const char* out_path) {
    return guarded(session, [&] {
        const DatasetManifest manifest = read_manifest(require(manifest_path, "manifest path"));
        const PromptTemplates templates = PromptTemplates::defaults();
        const auto backend = make_backend(session->backend, session->config.seed, templates);
        write_captions(require(out_path, "output path"),
                       summarize_dataset(manifest, templates, *backend));
    });
}

tgvad_status tgvad_msta_annotate(tgvad_session* session, const char* manifest_path,
                                 const char* summaries_path, const char* out_path) {
    return guarded(session, [&] {
        const DatasetManifest manifest = read_manifest(require(manifest_path, "manifest path"));
        const auto summaries = read_captions(require(summaries_path, "summaries path"));
        const PromptTemplates templates = PromptTemplates::defaults();
        const auto backend = make_backend(session->backend, session->config.seed, templates);
        write_captions(require(out_path, "output path"),
                       annotate_dataset(manifest, summaries, msta_config(session->config),
                                        templates, *backend));
    });
}

tgvad_status tgvad_msta_generate(tgvad_session* session, const char* annotated_path,
                                 const char* summaries_path, int32_t count,
                                 const char* out_path) {
    return guarded(session, [&] {
        const auto annotated = read_captions(require(annotated_path, "annotated path"));
        std::vector<CaptionSample> summaries;
        if (summaries_path) {
            summaries = read_captions(summaries_path);
        }
        std::optional<std::size_t> resolved;
        if (count >= 0) {
            resolved = static_cast<std::size_t>(count);
        }
        const PromptTemplates templates = PromptTemplates::defaults();
        const auto backend = make_backend(session->backend, session->config.seed, templates);
        write_captions(require(out_path, "output path"),
                       generate_dataset(annotated, summaries, resolved,
                                        msta_config(session->config), templates, *backend));
    });
}

tgvad_status tgvad_train_text_head(tgvad_session* session, const char* const* caption_paths,
                                   uint32_t caption_path_count, const char* head_out_path,
                                   const char* trace_path) {
    return guarded(session, [&] {
        if (!caption_paths || caption_path_count == 0) {
            throw ContractError("at least one caption file is required");
        }
        std::vector<std::string> texts;
        std::vector<double> labels;
        std::size_t unlabeled = 0;
        for (uint32_t i = 0; i < caption_path_count; ++i) {
            for (const CaptionSample& sample :
                 read_captions(require(caption_paths[i], "caption path"))) {
                if (!sample.label) {
                    ++unlabeled;
                    continue;
                }
                texts.push_back(sample.text);
                labels.push_back(*sample.label);
            }
        }
        if (texts.empty()) {
            throw ContractError("no labeled caption samples found in the given files");
        }
        const auto embedder = make_embedder(session->config);
        TextHead head(session->config.text_dim, session->config.text_head_hidden,
                      session->config.seed);
        TextHeadTrainConfig cfg;
        cfg.learning_rate = session->config.text_head_lr;
        cfg.steps = session->config.text_head_steps;
        cfg.batch_size = session->config.text_head_batch;
        cfg.seed = session->config.seed;
        const auto trace = head.train(embed_matrix(*embedder, texts), labels, cfg);
        head.save(require(head_out_path, "head output path"));
        if (trace_path) {
            write_loss_trace(trace_path, trace);
        }
    });
}

tgvad_status tgvad_train(tgvad_session* session, const char* manifest_path,
                         const char* model_out_path, const char* trace_path) {
    return guarded(session, [&] {
        const DatasetManifest manifest = read_manifest(require(manifest_path, "manifest path"));
        const auto modalities = session->config.modality_set();
        const LoadedDataset dataset = load_dataset(manifest, modalities);
        const auto dims = dataset_feature_dims(dataset, modalities);
        FusionModel model(ModelConfig::from_run_config(session->config, dims));
        const TrainResult result =
            train_model(model, dataset.train, train_config(session->config));
        model.save(require(model_out_path, "model output path"));
        if (trace_path) {
            write_loss_trace(trace_path, result.loss_trace);
        }
    });
}

tgvad_status tgvad_eval(tgvad_session* session, const char* manifest_path,
                        const char* model_path, const char* text_head_path, double* out_auc,
                        double* out_ap) {
    return guarded(session, [&] {
        const EvalResult result =
            run_eval(session, require(manifest_path, "manifest path"),
                     require(model_path, "model path"), text_head_path);
        if (out_auc) {
            *out_auc = result.auc;
        }
        if (out_ap) {
            *out_ap = result.ap;
        }
    });
}

tgvad_status tgvad_eval_scores(tgvad_session* session, const char* manifest_path,
                               const char* scores_csv_path, double* out_auc, double* out_ap) {
    return guarded(session, [&] {
        const DatasetManifest manifest = read_manifest(require(manifest_path, "manifest path"));
        const auto rows = read_score_csv(require(scores_csv_path, "scores path"));
        const EvalResult result = evaluate_scores(manifest, rows);
        if (out_auc) {
            *out_auc = result.auc;
        }
        if (out_ap) {
            *out_ap = result.ap;
        }
    });
}

tgvad_status tgvad_score(tgvad_session* session, const char* manifest_path,
                         const char* model_path, const char* text_head_path,
                         const char* csv_out_path) {
    return guarded(session, [&] {
        const EvalResult result =
            run_eval(session, require(manifest_path, "manifest path"),
                     require(model_path, "model path"), text_head_path);
        write_score_csv(require(csv_out_path, "scores output path"), result.rows);
    });
}

} // extern "C"
