#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "support/test_support.hpp"
#include "tgvad/errors.hpp"
#include "tgvad/model.hpp"
#include "tgvad/synth.hpp"

using namespace tgvad;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_run_config() {
    RunConfig run;
    run.modalities = "R,F";
    run.embed_dim = 8;
    run.num_heads = 2;
    run.fusion_layers = 2;
    run.first_tokens = 2;
    run.global_layers = 1;
    run.ffn_mult = 2;
    run.batch_size = 4;
    run.learning_rate = 0.05;
    run.train_steps = 60;
    run.seed = 3;
    return run;
}

std::map<Modality, SnippetFeatures> random_features(std::size_t n_t, Rng& rng) {
    std::map<Modality, SnippetFeatures> features;
    Tensor r = Tensor::zeros(n_t, 5);
    Tensor f = Tensor::zeros(n_t, 6);
    tgvad::testing::fill_normal(r, rng);
    tgvad::testing::fill_normal(f, rng);
    features.emplace(Modality::Rgb, SnippetFeatures{Modality::Rgb, r, 4});
    features.emplace(Modality::Flow, SnippetFeatures{Modality::Flow, f, 4});
    return features;
}

ModelConfig tiny_model_config() {
    return ModelConfig::from_run_config(tiny_run_config(),
                                        {{Modality::Rgb, 5}, {Modality::Flow, 6}});
}

struct TempDataset {
    fs::path path;
    DatasetManifest manifest;
    LoadedDataset data;

    explicit TempDataset(double strength = 3.0) {
        path = fs::temp_directory_path() /
               ("tgvad_model_" + std::to_string(Rng(std::random_device{}()).next_u64()));
        SynthSpec spec;
        spec.train_normal = 4;
        spec.train_abnormal = 4;
        spec.test_normal = 3;
        spec.test_abnormal = 3;
        spec.snippets_min = 8;
        spec.snippets_max = 10;
        spec.frames_per_snippet = 4;
        spec.feature_dims = {{Modality::Rgb, 5}, {Modality::Flow, 6}};
        spec.modalities = {Modality::Rgb, Modality::Flow};
        spec.strength = strength;
        spec.seed = 77;
        generate_synthetic_dataset(spec, path.string());
        manifest = read_manifest((path / "manifest.json").string());
        data = load_dataset(manifest, spec.modalities);
    }
    ~TempDataset() { fs::remove_all(path); }
};

} // namespace

TEST_CASE("score_video emits one score per snippet inside (0, 1)") {
    FusionModel model(tiny_model_config());
    Rng rng(5);
    for (std::size_t n_t : {1u, 4u, 11u}) {
        Tape tape;
        const Tensor scores = model.score_video(tape, random_features(n_t, rng));
        CHECK(scores.rows() == n_t);
        CHECK(scores.cols() == 1);
        for (double s : scores.values()) {
            CHECK(s > 0.0);
            CHECK(s < 1.0);
        }
    }
}

TEST_CASE("score_video validates its inputs") {
    FusionModel model(tiny_model_config());
    Rng rng(6);
    auto features = random_features(4, rng);

    SUBCASE("missing modality") {
        features.erase(Modality::Flow);
        Tape tape;
        CHECK_THROWS_AS(model.score_video(tape, features), ContractError);
    }
    SUBCASE("misaligned snippet counts") {
        features.at(Modality::Flow).matrix = Tensor::zeros(5, 6);
        Tape tape;
        CHECK_THROWS_AS(model.score_video(tape, features), AlignmentError);
    }
}

TEST_CASE("the MIL loss reaches the initial bottleneck tokens") {
    FusionModel model(tiny_model_config());
    Rng rng(7);
    Tape tape;
    Tensor scores = model.score_video(tape, random_features(6, rng));
    Tensor loss = tape.bce(tape.topk_mean(scores, 3), 1.0);
    tape.backward(loss);
    const Tensor bt = model.params().at("msbt.RF.bt1");
    REQUIRE(bt.has_grad());
    double total = 0.0;
    for (double g : bt.grad()) {
        total += std::fabs(g);
    }
    CHECK(total > 0.0);
}

TEST_CASE("end-to-end gradient against finite differences on the tiny config") {
    FusionModel model(tiny_model_config());
    Rng rng(8);
    auto features = random_features(4, rng);
    features.at(Modality::Rgb).matrix.set_requires_grad(true);
    features.at(Modality::Flow).matrix.set_requires_grad(true);

    auto eval = [&]() {
        Tape tape;
        Tensor scores = model.score_video(tape, features);
        return tape.bce(tape.topk_mean(scores, 2), 1.0).item();
    };

    Tape tape;
    Tensor scores = model.score_video(tape, features);
    Tensor loss = tape.bce(tape.topk_mean(scores, 2), 1.0);
    tape.backward(loss);

    for (Modality m : {Modality::Rgb, Modality::Flow}) {
        Tensor& input = features.at(m).matrix;
        const auto fd = tgvad::testing::finite_difference_gradient(input, eval, 1e-4);
        CHECK(tgvad::testing::max_rel_error(input.grad(), fd) < 1e-3);
        input.zero_grad();
    }
}

TEST_CASE("models save and reload to bitwise-identical scores") {
    const std::string path = (fs::temp_directory_path() / "tgvad_model_roundtrip.bin").string();
    FusionModel model(tiny_model_config());
    Rng rng(9);
    const auto features = random_features(5, rng);
    Tape tape;
    const auto before = model.score_video(tape, features).values();
    model.save(path);

    FusionModel restored = FusionModel::load(path);
    Tape tape2;
    CHECK(restored.score_video(tape2, features).values() == before);
    CHECK(restored.config().modalities == model.config().modalities);
    fs::remove(path);
}

TEST_CASE("training is deterministic and trends downward on separable data") {
    TempDataset dataset;
    RunConfig run = tiny_run_config();

    FusionModel model_a(ModelConfig::from_run_config(
        run, dataset_feature_dims(dataset.data, run.modality_set())));
    const TrainResult trace_a = train_model(model_a, dataset.data.train, train_config(run));

    FusionModel model_b(ModelConfig::from_run_config(
        run, dataset_feature_dims(dataset.data, run.modality_set())));
    const TrainResult trace_b = train_model(model_b, dataset.data.train, train_config(run));

    CHECK(trace_a.loss_trace == trace_b.loss_trace); // bitwise

    // Windowed means, not per-step monotonicity.
    const auto window_mean = [&](std::size_t begin, std::size_t end) {
        return std::accumulate(trace_a.loss_trace.begin() + begin,
                               trace_a.loss_trace.begin() + end, 0.0) /
               static_cast<double>(end - begin);
    };
    CHECK(window_mean(50, 60) < window_mean(0, 10));
}

TEST_CASE("training rejects single-class and empty datasets") {
    TempDataset dataset;
    RunConfig run = tiny_run_config();
    FusionModel model(ModelConfig::from_run_config(
        run, dataset_feature_dims(dataset.data, run.modality_set())));

    std::vector<LoadedVideo> only_normal;
    for (const LoadedVideo& v : dataset.data.train) {
        if (v.label == 0) {
            only_normal.push_back(v);
        }
    }
    CHECK_THROWS_AS(train_model(model, only_normal, train_config(run)), ContractError);
    CHECK_THROWS_AS(train_model(model, {}, train_config(run)), ContractError);
}

TEST_CASE("snippet text probabilities average per snippet and mark gaps") {
    TextHead head(8, 4, 11);
    HashedBowEmbedder embedder(8);
    std::vector<CaptionSample> captions(3);
    captions[0].text = "one";
    captions[0].snippet_index = 0;
    captions[1].text = "two";
    captions[1].snippet_index = 0;
    captions[2].text = "three";
    captions[2].snippet_index = 2;

    const auto probs = snippet_text_probabilities(head, embedder, captions, 3);
    REQUIRE(probs.size() == 3);
    REQUIRE(probs[0].has_value());
    CHECK(!probs[1].has_value());
    REQUIRE(probs[2].has_value());

    const double expected = 0.5 * (head.probability(embedder.embed("one")) +
                                   head.probability(embedder.embed("two")));
    CHECK(*probs[0] == doctest::Approx(expected));
}

TEST_CASE("evaluation blends with the text channel and reports rows") {
    TempDataset dataset;
    RunConfig run = tiny_run_config();
    run.train_steps = 30;
    FusionModel model(ModelConfig::from_run_config(
        run, dataset_feature_dims(dataset.data, run.modality_set())));
    train_model(model, dataset.data.train, train_config(run));

    const EvalResult plain = evaluate_model(model, dataset.data.test, nullptr, nullptr, 0.5);
    std::size_t snippets = 0;
    for (const LoadedVideo& v : dataset.data.test) {
        snippets += v.snippet_count;
    }
    CHECK(plain.rows.size() == snippets);
    for (const ScoreRow& row : plain.rows) {
        CHECK(!row.text.has_value());
        CHECK(row.final_score == row.fused); // no text channel: s_hat = s
    }

    TextHead head(8, 4, 13);
    HashedBowEmbedder embedder(8);
    const EvalResult blended = evaluate_model(model, dataset.data.test, &head, &embedder, 0.5);
    CHECK(blended.auc >= 0.0);
    bool any_text = false;
    for (const ScoreRow& row : blended.rows) {
        if (row.text) {
            any_text = true;
            CHECK(row.final_score ==
                  doctest::Approx(0.5 * row.fused + 0.5 * *row.text).epsilon(1e-12));
        }
    }
    CHECK(any_text);

    // alpha = 1 ignores the text probabilities entirely.
    const EvalResult alpha_one = evaluate_model(model, dataset.data.test, &head, &embedder, 1.0);
    CHECK(alpha_one.auc == doctest::Approx(plain.auc));
}

TEST_CASE("score curves written to CSV evaluate to the same metrics") {
    TempDataset dataset;
    RunConfig run = tiny_run_config();
    run.train_steps = 30;
    FusionModel model(ModelConfig::from_run_config(
        run, dataset_feature_dims(dataset.data, run.modality_set())));
    train_model(model, dataset.data.train, train_config(run));

    const EvalResult direct = evaluate_model(model, dataset.data.test, nullptr, nullptr, 1.0);
    const EvalResult via_rows = evaluate_scores(dataset.manifest, direct.rows);
    CHECK(via_rows.auc == doctest::Approx(direct.auc).epsilon(1e-12));
    CHECK(via_rows.ap == doctest::Approx(direct.ap).epsilon(1e-12));

    auto missing = direct.rows;
    missing.pop_back();
    CHECK_THROWS_AS(evaluate_scores(dataset.manifest, missing), AlignmentError);
}
