// Command-line front end. Everything goes through the C API in tgvad.h;
// subcommands compose through files (datasets, caption stores, models,
// score curves).

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tgvad.h"

namespace {

struct SessionHandle {
    tgvad_session* ptr = nullptr;
    SessionHandle() { tgvad_session_create(&ptr); }
    ~SessionHandle() { tgvad_session_destroy(ptr); }
    SessionHandle(const SessionHandle&) = delete;
    SessionHandle& operator=(const SessionHandle&) = delete;
};

struct CommonOptions {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string backend = "mock";
};

void add_common(CLI::App* cmd, CommonOptions& common) {
    cmd->add_option("--config", common.config_path, "Run configuration file (key = value)");
    cmd->add_option("--set", common.overrides, "Override one config key, e.g. --set seed=11")
        ->type_name("KEY=VALUE");
    cmd->add_option("--backend", common.backend, "LLM backend: mock or remote")
        ->check(CLI::IsMember({"mock", "remote"}));
}

int fail(tgvad_session* session, tgvad_status status) {
    std::fprintf(stderr, "error (%s): %s\n", tgvad_status_name(status),
                 tgvad_last_error(session));
    return 1;
}

int apply_common(tgvad_session* session, const CommonOptions& common) {
    if (!common.config_path.empty()) {
        if (auto st = tgvad_load_config(session, common.config_path.c_str()); st != TGVAD_OK) {
            return fail(session, st);
        }
    }
    for (const std::string& kv : common.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            std::fprintf(stderr, "error (config): --set expects KEY=VALUE, got '%s'\n",
                         kv.c_str());
            return 1;
        }
        const std::string key = kv.substr(0, eq);
        const std::string value = kv.substr(eq + 1);
        if (auto st = tgvad_set_option(session, key.c_str(), value.c_str()); st != TGVAD_OK) {
            return fail(session, st);
        }
    }
    if (auto st = tgvad_set_backend(session, common.backend.c_str()); st != TGVAD_OK) {
        return fail(session, st);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Text-guided multimodal video anomaly detection"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(tgvad_version()));

    CommonOptions common;

    std::string out_dir;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
    synth->add_option("--out", out_dir, "Output directory")->required();
    add_common(synth, common);

    std::string manifest_path, out_path, summaries_path, annotated_path;
    auto* summarize = app.add_subcommand("msta-summarize",
                                         "Stage-I: summarize training captions per video");
    summarize->add_option("--manifest", manifest_path, "Dataset manifest")->required();
    summarize->add_option("--out", out_path, "Summaries output (JSON lines)")->required();
    add_common(summarize, common);

    auto* annotate = app.add_subcommand("msta-annotate",
                                        "Stage-II: pseudo-label training captions");
    annotate->add_option("--manifest", manifest_path, "Dataset manifest")->required();
    annotate->add_option("--summaries", summaries_path, "Stage-I output")->required();
    annotate->add_option("--out", out_path, "Annotated captions output")->required();
    add_common(annotate, common);

    int generate_count = -1;
    auto* generate = app.add_subcommand("msta-generate",
                                        "Stage-III: generate anomaly descriptions");
    generate->add_option("--annotated", annotated_path, "Stage-II output")->required();
    generate->add_option("--summaries", summaries_path,
                         "Stage-I output (improves the automatic sample count)");
    generate->add_option("--count", generate_count,
                         "Samples to generate; negative balances the labeled pool");
    generate->add_option("--out", out_path, "Generated captions output")->required();
    add_common(generate, common);

    std::vector<std::string> caption_paths;
    std::string head_path, trace_path;
    auto* train_head = app.add_subcommand("train-text-head",
                                          "Train the caption anomaly head on labeled samples");
    train_head->add_option("--captions", caption_paths, "Caption files (repeatable)")
        ->required();
    train_head->add_option("--out", head_path, "Head parameter output")->required();
    train_head->add_option("--trace", trace_path, "Loss trace CSV");
    add_common(train_head, common);

    std::string model_path;
    auto* train = app.add_subcommand("train", "Train the fusion network (top-K MIL)");
    train->add_option("--manifest", manifest_path, "Dataset manifest")->required();
    train->add_option("--out", model_path, "Model output")->required();
    train->add_option("--trace", trace_path, "Loss trace CSV");
    add_common(train, common);

    std::string scores_path, text_head_path, metric = "both";
    auto* eval = app.add_subcommand("eval", "Frame-level AUC / AP on the test split");
    eval->add_option("--manifest", manifest_path, "Dataset manifest")->required();
    eval->add_option("--model", model_path, "Trained model");
    eval->add_option("--text-head", text_head_path, "Trained caption head (enables blending)");
    eval->add_option("--scores", scores_path, "Evaluate a precomputed score CSV instead");
    eval->add_option("--metric", metric, "auc, ap or both")
        ->check(CLI::IsMember({"auc", "ap", "both"}));
    add_common(eval, common);

    std::string csv_out;
    auto* score = app.add_subcommand("score", "Write per-snippet score curves as CSV");
    score->add_option("--manifest", manifest_path, "Dataset manifest")->required();
    score->add_option("--model", model_path, "Trained model")->required();
    score->add_option("--text-head", text_head_path, "Trained caption head");
    score->add_option("--out", csv_out, "Score CSV output")->required();
    add_common(score, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    SessionHandle session;
    if (!session.ptr) {
        std::fprintf(stderr, "error (internal): cannot create a session\n");
        return 1;
    }
    if (int rc = apply_common(session.ptr, common); rc != 0) {
        return rc;
    }

    tgvad_status status = TGVAD_OK;
    if (synth->parsed()) {
        status = tgvad_synth(session.ptr, out_dir.c_str());
    } else if (summarize->parsed()) {
        status = tgvad_msta_summarize(session.ptr, manifest_path.c_str(), out_path.c_str());
    } else if (annotate->parsed()) {
        status = tgvad_msta_annotate(session.ptr, manifest_path.c_str(), summaries_path.c_str(),
                                     out_path.c_str());
    } else if (generate->parsed()) {
        status = tgvad_msta_generate(session.ptr, annotated_path.c_str(),
                                     summaries_path.empty() ? nullptr : summaries_path.c_str(),
                                     generate_count, out_path.c_str());
    } else if (train_head->parsed()) {
        std::vector<const char*> paths;
        paths.reserve(caption_paths.size());
        for (const std::string& p : caption_paths) {
            paths.push_back(p.c_str());
        }
        status = tgvad_train_text_head(session.ptr, paths.data(),
                                       static_cast<uint32_t>(paths.size()), head_path.c_str(),
                                       trace_path.empty() ? nullptr : trace_path.c_str());
    } else if (train->parsed()) {
        status = tgvad_train(session.ptr, manifest_path.c_str(), model_path.c_str(),
                             trace_path.empty() ? nullptr : trace_path.c_str());
    } else if (eval->parsed()) {
        if (scores_path.empty() == model_path.empty()) {
            std::fprintf(stderr, "error (config): eval needs exactly one of --model or "
                                 "--scores\n");
            return 1;
        }
        double auc = 0.0;
        double ap = 0.0;
        if (!scores_path.empty()) {
            status = tgvad_eval_scores(session.ptr, manifest_path.c_str(), scores_path.c_str(),
                                       &auc, &ap);
        } else {
            status = tgvad_eval(session.ptr, manifest_path.c_str(), model_path.c_str(),
                                text_head_path.empty() ? nullptr : text_head_path.c_str(), &auc,
                                &ap);
        }
        if (status == TGVAD_OK) {
            if (metric == "auc" || metric == "both") {
                std::printf("AUC=%.4f\n", auc);
            }
            if (metric == "ap" || metric == "both") {
                std::printf("AP=%.4f\n", ap);
            }
        }
    } else if (score->parsed()) {
        status = tgvad_score(session.ptr, manifest_path.c_str(), model_path.c_str(),
                             text_head_path.empty() ? nullptr : text_head_path.c_str(),
                             csv_out.c_str());
    }

    if (status != TGVAD_OK) {
        return fail(session.ptr, status);
    }
    return 0;
}
