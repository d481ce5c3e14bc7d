#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "tgvad/data_io.hpp"
#include "tgvad/errors.hpp"
#include "tgvad/metrics.hpp"
#include "tgvad/model.hpp"
#include "tgvad/synth.hpp"

using namespace tgvad;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("tgvad_synth_" + std::to_string(Rng(std::random_device{}()).next_u64()));
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

SynthSpec tiny_spec() {
    SynthSpec spec;
    spec.train_normal = 3;
    spec.train_abnormal = 3;
    spec.test_normal = 3;
    spec.test_abnormal = 3;
    spec.snippets_min = 8;
    spec.snippets_max = 12;
    spec.frames_per_snippet = 4;
    spec.feature_dims = {{Modality::Rgb, 12}, {Modality::Flow, 10}};
    spec.modalities = {Modality::Rgb, Modality::Flow};
    spec.seed = 21;
    return spec;
}

std::string hash_tree(const fs::path& root) {
    // Order-stable digest of every file's bytes.
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (entry.is_regular_file()) {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::uint64_t digest = 0;
    for (const auto& file : files) {
        std::ifstream in(file, std::ios::binary);
        std::ostringstream buffer;
        buffer << in.rdbuf();
        digest ^= hash_text(fs::relative(file, root).string() + "\0" + buffer.str());
    }
    return std::to_string(digest);
}

} // namespace

TEST_CASE("a fixed seed reproduces the dataset byte for byte") {
    TempDir a, b;
    generate_synthetic_dataset(tiny_spec(), a.str());
    generate_synthetic_dataset(tiny_spec(), b.str());
    CHECK(hash_tree(a.path) == hash_tree(b.path));

    SynthSpec other = tiny_spec();
    other.seed = 22;
    TempDir c;
    generate_synthetic_dataset(other, c.str());
    CHECK(hash_tree(a.path) != hash_tree(c.path));
}

TEST_CASE("generated datasets load, align and carry both classes") {
    TempDir dir;
    SynthSpec spec = tiny_spec();
    spec.modalities = {Modality::Text, Modality::Rgb, Modality::Flow};
    HashedBowEmbedder embedder(spec.text_dim);
    generate_synthetic_dataset(spec, dir.str(), &embedder);

    const DatasetManifest manifest = read_manifest((dir.path / "manifest.json").string());
    CHECK(manifest.split("train").size() == 6);
    CHECK(manifest.split("test").size() == 6);

    const LoadedDataset dataset = load_dataset(manifest, spec.modalities);
    REQUIRE(dataset.train.size() == 6);
    REQUIRE(dataset.test.size() == 6);
    for (const LoadedVideo& video : dataset.test) {
        CHECK(video.snippet_count >= spec.snippets_min);
        CHECK(video.snippet_count <= spec.snippets_max);
        CHECK(video.frame_labels.size() == video.snippet_count * spec.frames_per_snippet);
        CHECK(video.features.at(Modality::Text).matrix.cols() == spec.text_dim);
        CHECK(!video.captions.empty());
    }
    const auto dims = dataset_feature_dims(dataset, spec.modalities);
    CHECK(dims.at(Modality::Rgb) == 12);
    CHECK(dims.at(Modality::Flow) == 10);
}

TEST_CASE("anomalous spans are contiguous and mirrored by the captions") {
    TempDir dir;
    SynthSpec spec = tiny_spec();
    generate_synthetic_dataset(spec, dir.str());
    const DatasetManifest manifest = read_manifest((dir.path / "manifest.json").string());
    const LoadedDataset dataset = load_dataset(manifest, spec.modalities);

    for (const LoadedVideo& video : dataset.test) {
        // Snippet-level truth from the frame labels.
        std::vector<int> snippet_truth(video.snippet_count, 0);
        for (std::size_t i = 0; i < video.snippet_count; ++i) {
            snippet_truth[i] = video.frame_labels[i * spec.frames_per_snippet];
        }
        if (video.label == 0) {
            for (int s : snippet_truth) {
                CHECK(s == 0);
            }
            continue;
        }
        // Exactly one contiguous run of ones.
        int transitions = 0;
        for (std::size_t i = 1; i < snippet_truth.size(); ++i) {
            transitions += snippet_truth[i] != snippet_truth[i - 1] ? 1 : 0;
        }
        CHECK(transitions <= 2);
        CHECK(*std::max_element(snippet_truth.begin(), snippet_truth.end()) == 1);

        // Captions mention the anomaly lexicon exactly on span snippets.
        for (const CaptionSample& caption : video.captions) {
            REQUIRE(caption.snippet_index.has_value());
            CHECK(caption_mentions_anomaly(caption.text) ==
                  (snippet_truth[*caption.snippet_index] == 1));
        }
    }
}

TEST_CASE("a strong signal is separable by the snippet-mean threshold oracle") {
    TempDir dir;
    SynthSpec spec = tiny_spec();
    spec.strength = 4.0;
    generate_synthetic_dataset(spec, dir.str());
    const DatasetManifest manifest = read_manifest((dir.path / "manifest.json").string());
    const LoadedDataset dataset = load_dataset(manifest, spec.modalities);

    std::vector<double> frame_scores;
    std::vector<int> frame_labels;
    for (const LoadedVideo& video : dataset.test) {
        const Tensor& rgb = video.features.at(Modality::Rgb).matrix;
        std::vector<double> snippet_means(video.snippet_count, 0.0);
        for (std::size_t i = 0; i < rgb.rows(); ++i) {
            for (std::size_t j = 0; j < rgb.cols(); ++j) {
                snippet_means[i] += rgb.at(i, j);
            }
            snippet_means[i] /= static_cast<double>(rgb.cols());
        }
        const auto expanded = expand_to_frames(snippet_means, video.frames_per_snippet);
        frame_scores.insert(frame_scores.end(), expanded.begin(), expanded.end());
        frame_labels.insert(frame_labels.end(), video.frame_labels.begin(),
                            video.frame_labels.end());
    }
    CHECK(frame_auc(frame_scores, frame_labels) > 0.95);
}

TEST_CASE("at strength zero the classes are indistinguishable after training") {
    TempDir dir;
    SynthSpec spec = tiny_spec();
    spec.strength = 0.0;
    spec.train_normal = 4;
    spec.train_abnormal = 4;
    spec.test_normal = 20;
    spec.test_abnormal = 20;
    generate_synthetic_dataset(spec, dir.str());
    const DatasetManifest manifest = read_manifest((dir.path / "manifest.json").string());
    const LoadedDataset dataset = load_dataset(manifest, spec.modalities);

    // Captions stay neutral at zero strength.
    for (const LoadedVideo& video : dataset.train) {
        for (const CaptionSample& caption : video.captions) {
            CHECK(!caption_mentions_anomaly(caption.text));
        }
    }

    RunConfig run;
    run.modalities = "R,F";
    run.embed_dim = 16;
    run.num_heads = 2;
    run.fusion_layers = 2;
    run.first_tokens = 2;
    run.global_layers = 1;
    run.ffn_mult = 2;
    run.batch_size = 4;
    run.learning_rate = 0.05;
    run.train_steps = 40;
    FusionModel model(
        ModelConfig::from_run_config(run, dataset_feature_dims(dataset, spec.modalities)));
    train_model(model, dataset.train, train_config(run));
    const EvalResult result = evaluate_model(model, dataset.test, nullptr, nullptr, 1.0);
    CHECK(result.auc > 0.4);
    CHECK(result.auc < 0.6);
}

TEST_CASE("degenerate specs are rejected") {
    SynthSpec spec = tiny_spec();
    spec.train_normal = 1;
    CHECK_THROWS_AS(spec.validate(), ConfigError);

    spec = tiny_spec();
    spec.span_min = 0.0;
    CHECK_THROWS_AS(spec.validate(), ConfigError);

    spec = tiny_spec();
    spec.feature_dims.erase(Modality::Flow);
    CHECK_THROWS_AS(spec.validate(), ConfigError);
}
