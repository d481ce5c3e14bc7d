#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "support/test_support.hpp"
#include "tgvad/errors.hpp"
#include "tgvad/msbt.hpp"

using namespace tgvad;
using tgvad::testing::fill_uniform;
using tgvad::testing::finite_difference_gradient;
using tgvad::testing::max_rel_error;

namespace {

EncoderConfig tiny_encoder() {
    EncoderConfig cfg;
    cfg.embed_dim = 8;
    cfg.num_heads = 2;
    cfg.ffn_mult = 2;
    return cfg;
}

MsbtConfig tiny_msbt() {
    MsbtConfig cfg;
    cfg.fusion_layers = 2;
    cfg.first_tokens = 2;
    return cfg;
}

TokenSequence random_tokens(Modality m, std::size_t n_t, std::size_t d, Rng& rng) {
    Tensor t = Tensor::zeros(n_t, d);
    fill_uniform(t, rng);
    return {m, t};
}

} // namespace

TEST_CASE("halving_schedule follows repeated floor halving") {
    CHECK(halving_schedule(16, 5) == std::vector<std::size_t>{16, 8, 4, 2, 1});
    CHECK(halving_schedule(2, 2) == std::vector<std::size_t>{2, 1});
}

TEST_CASE("halving_schedule rejects a sixth layer from 16 tokens, naming the minimum") {
    CHECK_THROWS_WITH_AS(halving_schedule(16, 6), doctest::Contains("32"), ConfigError);
}

TEST_CASE("enumerate_pairs emits the canonical order") {
    const auto all = enumerate_pairs({Modality::Text, Modality::Rgb, Modality::Flow,
                                      Modality::Audio});
    REQUIRE(all.size() == 12);
    std::string sequence;
    for (const auto& pair : all) {
        sequence += pair_code(pair) + " ";
    }
    CHECK(sequence == "TR RT TF FT TA AT RF FR RA AR FA AF ");

    const auto two = enumerate_pairs({Modality::Rgb, Modality::Flow});
    REQUIRE(two.size() == 2);
    CHECK(pair_code(two[0]) == "RF");
    CHECK(pair_code(two[1]) == "FR");

    CHECK(enumerate_pairs({Modality::Rgb, Modality::Flow, Modality::Audio}).size() == 6);
    CHECK_THROWS_AS(enumerate_pairs({Modality::Rgb}), ConfigError);
}

TEST_CASE("fuse_pair meets the shape contract and walks the default schedule") {
    ParamStore store(1);
    EncoderConfig enc; // D_E = 128
    MsbtConfig cfg;    // L_M = 5, 16 tokens
    Msbt msbt(store, cfg, enc, {Modality::Rgb, Modality::Flow});
    Rng rng(2);
    const auto a = random_tokens(Modality::Rgb, 6, 128, rng);
    const auto b = random_tokens(Modality::Flow, 6, 128, rng);
    Tape tape;
    const FusedPair fused = msbt.fuse_pair(tape, a, b);
    CHECK(fused.fused.rows() == 6);
    CHECK(fused.fused.cols() == 128);
    CHECK(fused.token_counts == std::vector<std::size_t>{16, 8, 4, 2, 1});
    CHECK(fused.final_tokens.rows() == 1);
}

TEST_CASE("pair fusion is asymmetric") {
    ParamStore store(3);
    Msbt msbt(store, tiny_msbt(), tiny_encoder(), {Modality::Rgb, Modality::Flow});
    Rng rng(4);
    const auto a = random_tokens(Modality::Rgb, 5, 8, rng);
    const auto b = random_tokens(Modality::Flow, 5, 8, rng);
    Tape tape;
    const Tensor rf = msbt.fuse_pair(tape, a, b).fused;
    const Tensor fr = msbt.fuse_pair(tape, b, a).fused;
    double diff = 0.0;
    for (std::size_t i = 0; i < rf.size(); ++i) {
        diff += std::fabs(rf.values()[i] - fr.values()[i]);
    }
    CHECK(diff > 1e-6);
}

TEST_CASE("fuse_pair rejects mismatched snippet counts") {
    ParamStore store(5);
    Msbt msbt(store, tiny_msbt(), tiny_encoder(), {Modality::Rgb, Modality::Flow});
    Rng rng(6);
    const auto a = random_tokens(Modality::Rgb, 5, 8, rng);
    const auto b = random_tokens(Modality::Flow, 4, 8, rng);
    Tape tape;
    CHECK_THROWS_AS(msbt.fuse_pair(tape, a, b), AlignmentError);
}

TEST_CASE("cross_transformer_layer output takes the query shape") {
    ParamStore store(7);
    const std::size_t d = 8;
    auto params = make_cross_transformer_layer(store, "ct", d, 2, 2, Activation::ReLU);
    Rng rng(8);
    Tensor queries = Tensor::zeros(1, d);
    fill_uniform(queries, rng);
    Tensor keyvalues = Tensor::zeros(2, d);
    fill_uniform(keyvalues, rng);
    Tape tape;
    Tensor out = cross_transformer_layer(tape, queries, keyvalues, params, static_cast<double>(d));
    CHECK(out.rows() == 1);
    CHECK(out.cols() == d);
}

TEST_CASE("zeroed query/key projections reduce cross attention to mean pooling") {
    ParamStore store(9);
    const std::size_t d = 8;
    auto params = make_cross_transformer_layer(store, "ct", d, 2, 2, Activation::ReLU);
    for (const auto& [name, tensor] : store.entries()) {
        const bool qk = name.find(".wq") != std::string::npos ||
                        name.find(".wk") != std::string::npos;
        const bool ffn = name.find(".ffn.") != std::string::npos;
        if (qk || ffn) {
            Tensor t = tensor;
            std::fill(t.values().begin(), t.values().end(), 0.0);
        }
    }
    Rng rng(10);
    Tensor queries = Tensor::zeros(3, d);
    fill_uniform(queries, rng);
    Tensor keyvalues = Tensor::zeros(5, d);
    fill_uniform(keyvalues, rng);

    Tape tape;
    Tensor out = cross_transformer_layer(tape, queries, keyvalues, params, static_cast<double>(d));

    // Uniform attention means each head contributes the mean-pooled value
    // projection; with the FFN zeroed the block is that plus the residual.
    Tape manual;
    Tensor kv_normed = manual.layer_norm(keyvalues, params.ln_kv_gain, params.ln_kv_bias);
    Tensor pooled = manual.mean_rows(kv_normed);
    std::vector<Tensor> heads;
    for (std::size_t h = 0; h < params.attn.wv.size(); ++h) {
        heads.push_back(manual.matmul(pooled, params.attn.wv[h]));
    }
    Tensor merged = manual.matmul(manual.concat_cols(heads), params.attn.wo);
    for (std::size_t i = 0; i < queries.rows(); ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const double expected = merged.at(0, j) + queries.at(i, j);
            CHECK(out.at(i, j) == doctest::Approx(expected).epsilon(1e-10));
        }
    }
}

TEST_CASE("gradients flow through two chained cross transformers") {
    ParamStore store(11);
    const std::size_t d = 8;
    auto ct1 = make_cross_transformer_layer(store, "ct1", d, 2, 2, Activation::GELU);
    auto ct2 = make_cross_transformer_layer(store, "ct2", d, 2, 2, Activation::GELU);
    Rng rng(12);
    Tensor seed_tokens = Tensor::zeros(2, d);
    fill_uniform(seed_tokens, rng);
    Tensor source = Tensor::zeros(4, d);
    fill_uniform(source, rng);
    source.set_requires_grad(true);
    Tensor queries = Tensor::zeros(1, d);
    fill_uniform(queries, rng);

    auto build = [&](Tape& t) {
        Tensor mid = cross_transformer_layer(t, seed_tokens, source, ct1, static_cast<double>(d));
        Tensor out = cross_transformer_layer(t, queries, mid, ct2, static_cast<double>(d));
        return t.sum(out);
    };
    auto eval = [&]() {
        Tape t;
        return build(t).item();
    };
    Tape tape;
    tape.backward(build(tape));
    const auto fd = finite_difference_gradient(source, eval, 1e-4);
    CHECK(max_rel_error(source.grad(), fd) < 1e-3);
}

TEST_CASE("weighting scales each fused block by its sigmoid weight") {
    ParamStore store(13);
    Msbt msbt(store, tiny_msbt(), tiny_encoder(), {Modality::Rgb, Modality::Flow});
    Rng rng(14);
    const std::size_t n_t = 4;
    std::map<Modality, TokenSequence> encoded{
        {Modality::Rgb, random_tokens(Modality::Rgb, n_t, 8, rng)},
        {Modality::Flow, random_tokens(Modality::Flow, n_t, 8, rng)},
    };
    Tape tape;
    const auto pairs = msbt.fuse_all(tape, encoded);
    const FusionOutput out = msbt.weight_and_concat(tape, pairs);

    REQUIRE(out.weights.size() == 2);
    for (double w : out.weights.values()) {
        CHECK(w > 0.0);
        CHECK(w < 1.0);
    }
    CHECK(out.weighted.rows() == n_t);
    CHECK(out.weighted.cols() == 2 * 8);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const double w = out.weights.values()[p];
        for (std::size_t i = 0; i < n_t; ++i) {
            for (std::size_t j = 0; j < 8; ++j) {
                CHECK(out.weighted.at(i, p * 8 + j) ==
                      doctest::Approx(w * pairs[p].fused.at(i, j)).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("unit weights recover the plain concatenation") {
    ParamStore store(15);
    MsbtConfig cfg = tiny_msbt();
    cfg.weighting = false;
    Msbt msbt(store, cfg, tiny_encoder(), {Modality::Rgb, Modality::Flow});
    Rng rng(16);
    std::map<Modality, TokenSequence> encoded{
        {Modality::Rgb, random_tokens(Modality::Rgb, 3, 8, rng)},
        {Modality::Flow, random_tokens(Modality::Flow, 3, 8, rng)},
    };
    Tape tape;
    const auto pairs = msbt.fuse_all(tape, encoded);
    const FusionOutput out = msbt.weight_and_concat(tape, pairs);
    for (double w : out.weights.values()) {
        CHECK(w == 1.0);
    }
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t j = 0; j < 8; ++j) {
                CHECK(out.weighted.at(i, p * 8 + j) == pairs[p].fused.at(i, j));
            }
        }
    }
}

TEST_CASE("a zero weight blanks its block") {
    ParamStore store(17);
    Msbt msbt(store, tiny_msbt(), tiny_encoder(), {Modality::Rgb, Modality::Flow});
    Rng rng(18);
    std::map<Modality, TokenSequence> encoded{
        {Modality::Rgb, random_tokens(Modality::Rgb, 3, 8, rng)},
        {Modality::Flow, random_tokens(Modality::Flow, 3, 8, rng)},
    };
    Tape tape;
    const auto pairs = msbt.fuse_all(tape, encoded);
    const Tensor forced = Tensor::column({0.0, 1.0});
    const Tensor weighted = Msbt::concat_weighted(tape, pairs, forced);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 8; ++j) {
            CHECK(weighted.at(i, j) == 0.0);
            CHECK(weighted.at(i, 8 + j) == pairs[1].fused.at(i, j));
        }
    }
}

TEST_CASE("weight_and_concat rejects a non-canonical pair order") {
    ParamStore store(19);
    Msbt msbt(store, tiny_msbt(), tiny_encoder(), {Modality::Rgb, Modality::Flow});
    Rng rng(20);
    std::map<Modality, TokenSequence> encoded{
        {Modality::Rgb, random_tokens(Modality::Rgb, 3, 8, rng)},
        {Modality::Flow, random_tokens(Modality::Flow, 3, 8, rng)},
    };
    Tape tape;
    auto pairs = msbt.fuse_all(tape, encoded);
    std::swap(pairs[0], pairs[1]);
    CHECK_THROWS_AS(msbt.weight_and_concat(tape, pairs), ContractError);
}

TEST_CASE("fused width is N_F * D_E across modality counts and snippet counts") {
    Rng rng(21);
    const std::vector<std::vector<Modality>> sets{
        {Modality::Rgb, Modality::Flow},
        {Modality::Rgb, Modality::Flow, Modality::Audio},
        {Modality::Text, Modality::Rgb, Modality::Flow, Modality::Audio},
    };
    for (const auto& mods : sets) {
        ParamStore store(22);
        EncoderConfig enc = tiny_encoder();
        enc.embed_dim = 16;
        Msbt msbt(store, tiny_msbt(), enc, mods);
        const std::size_t n_f = mods.size() * (mods.size() - 1);
        CHECK(msbt.fused_width() == n_f * 16);
        for (std::size_t n_t : {1u, 3u, 50u}) {
            std::map<Modality, TokenSequence> encoded;
            for (Modality m : mods) {
                encoded.emplace(m, random_tokens(m, n_t, 16, rng));
            }
            Tape tape;
            const FusionOutput out = msbt.weight_and_concat(tape, msbt.fuse_all(tape, encoded));
            CHECK(out.weighted.rows() == n_t);
            CHECK(out.weighted.cols() == n_f * 16);
        }
    }
}

TEST_CASE("weighted output width with paper defaults and four modalities is 1536") {
    ParamStore store(23);
    EncoderConfig enc;  // D_E = 128
    MsbtConfig cfg;     // L_M = 5, N_bt_1 = 16
    const std::vector<Modality> mods{Modality::Text, Modality::Rgb, Modality::Flow,
                                     Modality::Audio};
    Msbt msbt(store, cfg, enc, mods);
    CHECK(msbt.fused_width() == 12 * 128);

    // Stub fused pairs exercise the weighting path without twelve full
    // fusion passes.
    Rng rng(24);
    std::vector<FusedPair> pairs;
    for (const auto& pair : msbt.pairs()) {
        FusedPair fp;
        fp.pair = pair;
        fp.fused = Tensor::zeros(3, 128);
        fill_uniform(fp.fused, rng);
        fp.final_tokens = Tensor::zeros(1, 128);
        fill_uniform(fp.final_tokens, rng);
        pairs.push_back(std::move(fp));
    }
    Tape tape;
    const FusionOutput out = msbt.weight_and_concat(tape, pairs);
    CHECK(out.weighted.rows() == 3);
    CHECK(out.weighted.cols() == 1536);
}

TEST_CASE("gradient reaches the initial bottleneck tokens") {
    ParamStore store(25);
    Msbt msbt(store, tiny_msbt(), tiny_encoder(), {Modality::Rgb, Modality::Flow});
    Rng rng(26);
    std::map<Modality, TokenSequence> encoded{
        {Modality::Rgb, random_tokens(Modality::Rgb, 4, 8, rng)},
        {Modality::Flow, random_tokens(Modality::Flow, 4, 8, rng)},
    };
    Tape tape;
    const FusionOutput out = msbt.weight_and_concat(tape, msbt.fuse_all(tape, encoded));
    tape.backward(tape.sum(out.weighted));
    const Tensor bt1 = store.at("msbt.RF.bt1");
    REQUIRE(bt1.has_grad());
    double norm = 0.0;
    for (double g : bt1.grad()) {
        norm += std::fabs(g);
    }
    CHECK(norm > 0.0);
}

TEST_CASE("fixed-token and no-cross-transformer ablations execute") {
    Rng rng(27);
    std::map<Modality, TokenSequence> encoded{
        {Modality::Rgb, random_tokens(Modality::Rgb, 4, 8, rng)},
        {Modality::Flow, random_tokens(Modality::Flow, 4, 8, rng)},
    };

    MsbtConfig fixed = tiny_msbt();
    fixed.reduce_tokens = false;
    fixed.first_tokens = 2;
    ParamStore store_fixed(28);
    Msbt msbt_fixed(store_fixed, fixed, tiny_encoder(), {Modality::Rgb, Modality::Flow});
    Tape tape_fixed;
    const auto pairs_fixed = msbt_fixed.fuse_all(tape_fixed, encoded);
    CHECK(pairs_fixed[0].token_counts == std::vector<std::size_t>{2, 2});

    MsbtConfig no_ct = tiny_msbt();
    no_ct.use_cross_transformer = false;
    ParamStore store_nc(29);
    Msbt msbt_nc(store_nc, no_ct, tiny_encoder(), {Modality::Rgb, Modality::Flow});
    Tape tape_nc;
    const auto pairs_nc = msbt_nc.fuse_all(tape_nc, encoded);
    CHECK(pairs_nc[0].token_counts == std::vector<std::size_t>{2, 1});
    CHECK(store_nc.contains("msbt.RF.bt2"));
}

TEST_CASE("shared pair parameters collapse the parameter count") {
    ParamStore per_pair(30);
    Msbt a(per_pair, tiny_msbt(), tiny_encoder(), {Modality::Rgb, Modality::Flow});
    MsbtConfig shared_cfg = tiny_msbt();
    shared_cfg.shared_pair_params = true;
    ParamStore shared(31);
    Msbt b(shared, shared_cfg, tiny_encoder(), {Modality::Rgb, Modality::Flow});
    CHECK(shared.parameter_count() < per_pair.parameter_count());
}
