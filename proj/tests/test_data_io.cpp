#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "tgvad/config.hpp"
#include "tgvad/data_io.hpp"
#include "tgvad/errors.hpp"
#include "tgvad/rng.hpp"

using namespace tgvad;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("tgvad_io_" + std::to_string(Rng(std::random_device{}()).next_u64()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

} // namespace

TEST_CASE("feature files round-trip bit-exactly") {
    TempDir dir;
    Tensor matrix({3, 4});
    Rng rng(8);
    for (double& v : matrix.values()) {
        v = rng.uniform(-2.0, 2.0);
        v = static_cast<double>(static_cast<float>(v)); // representable in f32
    }
    const std::string path = dir.file("a.feat");
    write_feature_file(path, matrix, 16);
    const SnippetFeatures features = read_feature_file(path, Modality::Rgb);
    CHECK(features.modality == Modality::Rgb);
    CHECK(features.frames_per_snippet == 16);
    CHECK(features.matrix.values() == matrix.values());

    // write -> read -> write reproduces the bytes
    const std::string again = dir.file("b.feat");
    write_feature_file(again, features.matrix, features.frames_per_snippet);
    CHECK(read_bytes(path) == read_bytes(again));
}

TEST_CASE("feature file parse errors name the byte offsets") {
    TempDir dir;
    Tensor matrix({2, 2}, {1, 2, 3, 4});
    const std::string path = dir.file("x.feat");
    write_feature_file(path, matrix, 4);

    SUBCASE("truncated payload") {
        auto bytes = read_bytes(path);
        bytes.resize(bytes.size() - 5);
        std::ofstream(path, std::ios::binary) << bytes;
        CHECK_THROWS_WITH_AS(read_feature_file(path, Modality::Rgb),
                             doctest::Contains("expected 16 bytes, found 11"), ParseError);
    }

    SUBCASE("bad magic") {
        auto bytes = read_bytes(path);
        bytes[0] = 'X';
        std::ofstream(path, std::ios::binary) << bytes;
        CHECK_THROWS_WITH_AS(read_feature_file(path, Modality::Rgb),
                             doctest::Contains("MVADFEAT"), ParseError);
    }

    SUBCASE("version mismatch") {
        auto bytes = read_bytes(path);
        bytes[8] = 9;
        std::ofstream(path, std::ios::binary) << bytes;
        CHECK_THROWS_WITH_AS(read_feature_file(path, Modality::Rgb),
                             doctest::Contains("version"), ParseError);
    }

    SUBCASE("zero rows are rejected") {
        auto bytes = read_bytes(path);
        bytes[12] = bytes[13] = bytes[14] = bytes[15] = 0;
        bytes.resize(20); // header only
        std::ofstream(path, std::ios::binary) << bytes;
        CHECK_THROWS_AS(read_feature_file(path, Modality::Rgb), ParseError);
    }

    SUBCASE("trailing bytes are rejected") {
        auto bytes = read_bytes(path);
        bytes.push_back('\0');
        std::ofstream(path, std::ios::binary) << bytes;
        CHECK_THROWS_WITH_AS(read_feature_file(path, Modality::Rgb),
                             doctest::Contains("trailing"), ParseError);
    }
}

TEST_CASE("caption stores round-trip") {
    TempDir dir;
    std::vector<CaptionSample> samples(3);
    samples[0].text = "a man walks calmly near the station";
    samples[0].video_id = "v0";
    samples[0].snippet_index = 4;
    samples[0].stage = CaptionStage::Original;
    samples[1].text = "summary text";
    samples[1].video_id = "v0";
    samples[1].stage = CaptionStage::Summary;
    samples[1].label = 1.0;
    samples[2].text = "generated text";
    samples[2].stage = CaptionStage::Generated;
    samples[2].label = 1.0;
    samples[2].duplicate = true;

    const std::string path = dir.file("captions.jsonl");
    write_captions(path, samples);
    const auto loaded = read_captions(path);
    REQUIRE(loaded.size() == 3);
    CHECK(loaded[0].text == samples[0].text);
    CHECK(*loaded[0].snippet_index == 4);
    CHECK(!loaded[0].label);
    CHECK(loaded[1].stage == CaptionStage::Summary);
    CHECK(*loaded[1].label == 1.0);
    CHECK(loaded[2].duplicate);

    // write -> read -> write is byte-identical
    const std::string again = dir.file("captions2.jsonl");
    write_captions(again, loaded);
    CHECK(read_bytes(path) == read_bytes(again));
}

TEST_CASE("caption parse failures carry the line number") {
    TempDir dir;
    const std::string path = dir.file("bad.jsonl");
    std::ofstream(path) << R"({"text":"ok"})" << "\n" << "not json" << "\n";
    CHECK_THROWS_WITH_AS(read_captions(path), doctest::Contains(":2"), ParseError);
}

TEST_CASE("manifests round-trip and validate their records") {
    TempDir dir;
    DatasetManifest manifest;
    manifest.root = dir.path.string();
    VideoRecord train;
    train.id = "train_000";
    train.split = "train";
    train.label = 1;
    train.feature_paths[Modality::Rgb] = "features/train_000.R.feat";
    train.caption_path = "captions/train_000.jsonl";
    VideoRecord test;
    test.id = "test_000";
    test.split = "test";
    test.label = 0;
    test.feature_paths[Modality::Rgb] = "features/test_000.R.feat";
    test.frame_label_path = "frame_labels/test_000.txt";
    manifest.videos = {train, test};

    const std::string path = dir.file("manifest.json");
    write_manifest(path, manifest);
    const DatasetManifest loaded = read_manifest(path);
    REQUIRE(loaded.videos.size() == 2);
    CHECK(loaded.videos[0].id == "train_000");
    CHECK(loaded.videos[0].feature_paths.at(Modality::Rgb) == "features/train_000.R.feat");
    CHECK(loaded.split("test").size() == 1);
    CHECK(loaded.resolve("x/y.feat") == (dir.path / "x/y.feat").string());

    SUBCASE("a training video without a label is rejected") {
        manifest.videos[0].label.reset();
        CHECK_THROWS_AS(write_manifest(path, manifest), ParseError);
    }
    SUBCASE("a test video without frame labels is rejected") {
        manifest.videos[1].frame_label_path.reset();
        CHECK_THROWS_AS(write_manifest(path, manifest), ParseError);
    }
}

TEST_CASE("frame labels round-trip and reject junk") {
    TempDir dir;
    const std::string path = dir.file("labels.txt");
    write_frame_labels(path, {0, 1, 1, 0, 1});
    CHECK(read_frame_labels(path) == std::vector<int>{0, 1, 1, 0, 1});
    std::ofstream(path) << "0\n2\n";
    CHECK_THROWS_WITH_AS(read_frame_labels(path), doctest::Contains(":2"), ParseError);
}

TEST_CASE("score CSVs round-trip, including absent text probabilities") {
    TempDir dir;
    std::vector<ScoreRow> rows(2);
    rows[0] = {"v0", 0, 0.25, 0.75, 0.5};
    rows[1] = {"v0", 1, 0.125, std::nullopt, 0.125};
    const std::string path = dir.file("scores.csv");
    write_score_csv(path, rows);
    const auto loaded = read_score_csv(path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].text.has_value());
    CHECK(*loaded[0].text == 0.75);
    CHECK(!loaded[1].text.has_value());
    CHECK(loaded[1].final_score == 0.125);

    const std::string again = dir.file("scores2.csv");
    write_score_csv(again, loaded);
    CHECK(read_bytes(path) == read_bytes(again));
}

TEST_CASE("missing files raise io errors naming the path") {
    CHECK_THROWS_WITH_AS(read_feature_file("/nonexistent/f.feat", Modality::Rgb),
                         doctest::Contains("/nonexistent/f.feat"), IoError);
    CHECK_THROWS_WITH_AS(read_manifest("/nonexistent/manifest.json"),
                         doctest::Contains("/nonexistent/manifest.json"), IoError);
}

TEST_CASE("run configs parse, override and reject unknown keys") {
    RunConfig cfg = parse_run_config("# comment\n"
                                     "seed = 11\n"
                                     "modalities = R,F\n"
                                     "alpha = 0.25\n"
                                     "first_tokens = 8\n"
                                     "fusion_layers = 4\n",
                                     "inline");
    CHECK(cfg.seed == 11);
    CHECK(cfg.alpha == 0.25);
    CHECK(cfg.modality_set().size() == 2);

    CHECK_THROWS_WITH_AS(parse_run_config("no_such_key = 1\n", "inline"),
                         doctest::Contains("no_such_key"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("alpha = maybe\n", "inline"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("alpha 0.5\n", "inline"), ParseError);
    CHECK_THROWS_AS(parse_run_config("alpha = 1.5\n", "inline"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("first_tokens = 16\nfusion_layers = 6\n", "inline"),
                    ConfigError);
    CHECK_THROWS_AS(parse_run_config("delta = 1.0\n", "inline"), ConfigError);
}

TEST_CASE("config defaults follow the reference hyperparameters") {
    const RunConfig cfg;
    CHECK(cfg.embed_dim == 128);
    CHECK(cfg.num_heads == 4);
    CHECK(cfg.encoder_layers == 1);
    CHECK(cfg.fusion_layers == 5);
    CHECK(cfg.first_tokens == 16);
    CHECK(cfg.global_layers == 3);
    CHECK(cfg.top_k == 9);
    CHECK(cfg.alpha == 0.5);
    CHECK(cfg.batch_size == 32);
    CHECK(cfg.num_samplings == 10);
    CHECK(cfg.context_samples == 80);
    CHECK(cfg.delta == 0.7);
}
