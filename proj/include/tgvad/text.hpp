#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "tgvad/nn.hpp"
#include "tgvad/tensor.hpp"

namespace tgvad {

/// Maps a text to a fixed-width feature vector. Stands in for the
/// fine-tuned language-model extractor; implementations must be
/// deterministic.
class TextEmbedder {
public:
    virtual ~TextEmbedder() = default;
    virtual std::size_t dim() const = 0;
    virtual std::vector<double> embed(const std::string& text) const = 0;
};

/// Signed bag-of-words: lowercase alphanumeric tokens are hashed into one of
/// dim buckets with a hash-derived sign, then the vector is L2-normalized.
class HashedBowEmbedder : public TextEmbedder {
public:
    explicit HashedBowEmbedder(std::size_t dim);
    std::size_t dim() const override { return dim_; }
    std::vector<double> embed(const std::string& text) const override;

private:
    std::size_t dim_;
};

/// Precomputed embeddings loaded from a JSON-lines file of
/// {"text": ..., "vector": [...]} rows; lookup is by exact text.
class FileEmbedder : public TextEmbedder {
public:
    explicit FileEmbedder(const std::string& path);
    std::size_t dim() const override { return dim_; }
    std::vector<double> embed(const std::string& text) const override;

private:
    std::size_t dim_ = 0;
    std::vector<std::pair<std::string, std::vector<double>>> table_;
};

/// Embeds a batch of texts into a row-per-text matrix.
Tensor embed_matrix(const TextEmbedder& embedder, const std::vector<std::string>& texts);

struct TextHeadTrainConfig {
    double learning_rate = 0.5;
    std::size_t steps = 400;
    std::size_t batch_size = 32;
    std::uint64_t seed = 7;
};

/// The caption anomaly regressor: a two-layer MLP over text embeddings with
/// a sigmoid output.
class TextHead {
public:
    TextHead(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed);

    std::size_t input_dim() const { return input_dim_; }

    /// Probability for one embedded caption.
    double probability(const std::vector<double>& embedding) const;
    /// One probability per row of the embedding matrix.
    std::vector<double> probabilities(const Tensor& embeddings) const;

    /// Minimizes BCE against (possibly fractional) labels with seeded
    /// mini-batch gradient descent; returns the per-step loss trace.
    std::vector<double> train(const Tensor& embeddings, const std::vector<double>& labels,
                              const TextHeadTrainConfig& cfg);

    void save(const std::string& path) const;
    void load(const std::string& path);

    ParamStore& params() { return store_; }

private:
    Tensor forward(Tape& tape, const Tensor& embeddings) const;

    std::size_t input_dim_;
    std::size_t hidden_dim_;
    ParamStore store_;
    std::vector<DenseLayer> layers_;
};

} // namespace tgvad
