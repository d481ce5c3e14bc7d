#include "tgvad/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "tgvad/errors.hpp"
#include "tgvad/rng.hpp"

namespace tgvad {

namespace {

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> words;
    std::string current;
    for (char raw : text) {
        const auto c = static_cast<unsigned char>(raw);
        if (std::isalnum(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else if (!current.empty()) {
            words.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) {
        words.push_back(std::move(current));
    }
    return words;
}

} // namespace

HashedBowEmbedder::HashedBowEmbedder(std::size_t dim) : dim_(dim) {
    if (dim == 0) {
        throw ConfigError("embedding dimension must be positive");
    }
}

std::vector<double> HashedBowEmbedder::embed(const std::string& text) const {
    std::vector<double> vec(dim_, 0.0);
    for (const std::string& word : tokenize(text)) {
        const std::uint64_t h = hash_text(word);
        const std::size_t bucket = h % dim_;
        const double sign = (h >> 63) ? -1.0 : 1.0;
        vec[bucket] += sign;
    }
    double norm = 0.0;
    for (double v : vec) {
        norm += v * v;
    }
    if (norm > 0.0) {
        const double inv = 1.0 / std::sqrt(norm);
        for (double& v : vec) {
            v *= inv;
        }
    }
    return vec;
}

FileEmbedder::FileEmbedder(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open embedding file '" + path + "'");
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        nlohmann::json row;
        try {
            row = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": invalid JSON: " +
                             e.what());
        }
        if (!row.contains("text") || !row.contains("vector")) {
            throw ParseError(path + ":" + std::to_string(line_no) +
                             ": rows need 'text' and 'vector'");
        }
        std::vector<double> vec = row["vector"].get<std::vector<double>>();
        if (dim_ == 0) {
            dim_ = vec.size();
        } else if (vec.size() != dim_) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": vector width " +
                             std::to_string(vec.size()) + " differs from earlier rows (" +
                             std::to_string(dim_) + ")");
        }
        table_.emplace_back(row["text"].get<std::string>(), std::move(vec));
    }
    if (table_.empty()) {
        throw ParseError("embedding file '" + path + "' is empty");
    }
}

std::vector<double> FileEmbedder::embed(const std::string& text) const {
    for (const auto& [key, vec] : table_) {
        if (key == text) {
            return vec;
        }
    }
    throw ContractError("no precomputed embedding for text: " + text);
}

Tensor embed_matrix(const TextEmbedder& embedder, const std::vector<std::string>& texts) {
    if (texts.empty()) {
        throw ContractError("embed_matrix requires at least one text");
    }
    Tensor out({texts.size(), embedder.dim()});
    for (std::size_t i = 0; i < texts.size(); ++i) {
        const auto vec = embedder.embed(texts[i]);
        std::copy(vec.begin(), vec.end(), out.values().begin() + i * embedder.dim());
    }
    return out;
}

TextHead::TextHead(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed)
    : input_dim_(input_dim), hidden_dim_(hidden_dim), store_(seed) {
    if (input_dim == 0 || hidden_dim == 0) {
        throw ConfigError("text head dimensions must be positive");
    }
    layers_ = make_mlp(store_, "text_head", {input_dim_, hidden_dim_, 1}, Activation::ReLU,
                       Activation::Sigmoid);
}

Tensor TextHead::forward(Tape& tape, const Tensor& embeddings) const {
    if (embeddings.cols() != input_dim_) {
        throw ConfigError("embedding width " + std::to_string(embeddings.cols()) +
                          " does not match the text head input dim " +
                          std::to_string(input_dim_));
    }
    return mlp_forward(tape, embeddings, layers_);
}

double TextHead::probability(const std::vector<double>& embedding) const {
    Tape tape;
    Tensor row({1, embedding.size()}, embedding);
    return forward(tape, row).item();
}

std::vector<double> TextHead::probabilities(const Tensor& embeddings) const {
    Tape tape;
    return forward(tape, embeddings).values();
}

std::vector<double> TextHead::train(const Tensor& embeddings, const std::vector<double>& labels,
                                    const TextHeadTrainConfig& cfg) {
    if (embeddings.rows() != labels.size()) {
        throw AlignmentError("text head training: " + std::to_string(embeddings.rows()) +
                             " embeddings vs " + std::to_string(labels.size()) + " labels");
    }
    for (double y : labels) {
        if (y < 0.0 || y > 1.0) {
            throw ContractError("text head labels must lie in [0, 1]");
        }
    }
    Rng rng(mix_seed(cfg.seed, 0x7e47));
    const std::size_t n = labels.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
    }
    std::vector<double> trace;
    trace.reserve(cfg.steps);
    std::size_t cursor = n; // forces an initial shuffle
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        const std::size_t batch = std::min(cfg.batch_size, n);
        std::vector<std::size_t> picked(batch);
        for (std::size_t i = 0; i < batch; ++i) {
            if (cursor == n) {
                rng.shuffle(order);
                cursor = 0;
            }
            picked[i] = order[cursor++];
        }
        Tensor batch_embeddings({batch, input_dim_});
        for (std::size_t i = 0; i < batch; ++i) {
            const double* src = embeddings.values().data() + picked[i] * input_dim_;
            std::copy(src, src + input_dim_, batch_embeddings.values().begin() + i * input_dim_);
        }
        Tape tape;
        Tensor probs = forward(tape, batch_embeddings);
        std::vector<Tensor> losses;
        losses.reserve(batch);
        for (std::size_t i = 0; i < batch; ++i) {
            losses.push_back(tape.bce(tape.slice_rows(probs, i, i + 1), labels[picked[i]]));
        }
        Tensor loss = tape.scale(tape.sum(tape.concat_rows(losses)),
                                 1.0 / static_cast<double>(batch));
        store_.zero_grads();
        tape.backward(loss);
        store_.sgd_step(cfg.learning_rate);
        const double value = loss.item();
        if (!std::isfinite(value)) {
            throw NumericError("text head training diverged at step " + std::to_string(step));
        }
        trace.push_back(value);
    }
    return trace;
}

void TextHead::save(const std::string& path) const {
    store_.save(path);
}

void TextHead::load(const std::string& path) {
    store_.load(path);
}

} // namespace tgvad
