#include "tgvad/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

#include "tgvad/errors.hpp"

namespace tgvad {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) {
        return "";
    }
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::size_t parse_size(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(value, &pos);
        if (pos != value.size() || v < 0) {
            throw std::invalid_argument(value);
        }
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' expects a non-negative integer, got '" + value +
                          "'");
    }
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) {
            throw std::invalid_argument(value);
        }
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' expects a number, got '" + value + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "on" || value == "true" || value == "1" || value == "yes") return true;
    if (value == "off" || value == "false" || value == "0" || value == "no") return false;
    throw ConfigError("key '" + key + "' expects on/off, got '" + value + "'");
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(value, &pos);
        if (pos != value.size()) {
            throw std::invalid_argument(value);
        }
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' expects an unsigned integer, got '" + value + "'");
    }
}

} // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    using Setter = std::function<void(RunConfig&, const std::string&)>;
    static const std::map<std::string, Setter> setters = {
        {"seed", [](RunConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); }},
        {"modalities", [](RunConfig& c, const std::string& v) { c.modalities = v; }},
        {"embed_dim", [](RunConfig& c, const std::string& v) { c.embed_dim = parse_size("embed_dim", v); }},
        {"num_heads", [](RunConfig& c, const std::string& v) { c.num_heads = parse_size("num_heads", v); }},
        {"encoder_layers", [](RunConfig& c, const std::string& v) { c.encoder_layers = parse_size("encoder_layers", v); }},
        {"positional", [](RunConfig& c, const std::string& v) { c.positional = v; }},
        {"positional_table", [](RunConfig& c, const std::string& v) { c.positional_table = parse_size("positional_table", v); }},
        {"ffn_mult", [](RunConfig& c, const std::string& v) { c.ffn_mult = parse_size("ffn_mult", v); }},
        {"ffn_activation", [](RunConfig& c, const std::string& v) { c.ffn_activation = v; }},
        {"fusion_layers", [](RunConfig& c, const std::string& v) { c.fusion_layers = parse_size("fusion_layers", v); }},
        {"first_tokens", [](RunConfig& c, const std::string& v) { c.first_tokens = parse_size("first_tokens", v); }},
        {"weight_layers", [](RunConfig& c, const std::string& v) { c.weight_layers = parse_size("weight_layers", v); }},
        {"msbt_tokens", [](RunConfig& c, const std::string& v) { c.msbt_tokens = v; }},
        {"msbt_cross_transformer", [](RunConfig& c, const std::string& v) { c.msbt_cross_transformer = parse_bool("msbt_cross_transformer", v); }},
        {"msbt_weighting", [](RunConfig& c, const std::string& v) { c.msbt_weighting = parse_bool("msbt_weighting", v); }},
        {"msbt_weight_activation", [](RunConfig& c, const std::string& v) { c.msbt_weight_activation = v; }},
        {"msbt_shared_pair_params", [](RunConfig& c, const std::string& v) { c.msbt_shared_pair_params = parse_bool("msbt_shared_pair_params", v); }},
        {"global_layers", [](RunConfig& c, const std::string& v) { c.global_layers = parse_size("global_layers", v); }},
        {"top_k", [](RunConfig& c, const std::string& v) { c.top_k = parse_size("top_k", v); }},
        {"alpha", [](RunConfig& c, const std::string& v) { c.alpha = parse_double("alpha", v); }},
        {"batch_size", [](RunConfig& c, const std::string& v) { c.batch_size = parse_size("batch_size", v); }},
        {"learning_rate", [](RunConfig& c, const std::string& v) { c.learning_rate = parse_double("learning_rate", v); }},
        {"train_steps", [](RunConfig& c, const std::string& v) { c.train_steps = parse_size("train_steps", v); }},
        {"num_samplings", [](RunConfig& c, const std::string& v) { c.num_samplings = parse_size("num_samplings", v); }},
        {"context_samples", [](RunConfig& c, const std::string& v) { c.context_samples = parse_size("context_samples", v); }},
        {"delta", [](RunConfig& c, const std::string& v) { c.delta = parse_double("delta", v); }},
        {"num_generated", [](RunConfig& c, const std::string& v) { c.num_generated = v; }},
        {"text_dim", [](RunConfig& c, const std::string& v) { c.text_dim = parse_size("text_dim", v); }},
        {"embedder", [](RunConfig& c, const std::string& v) { c.embedder = v; }},
        {"embedding_file", [](RunConfig& c, const std::string& v) { c.embedding_file = v; }},
        {"text_head_hidden", [](RunConfig& c, const std::string& v) { c.text_head_hidden = parse_size("text_head_hidden", v); }},
        {"text_head_lr", [](RunConfig& c, const std::string& v) { c.text_head_lr = parse_double("text_head_lr", v); }},
        {"text_head_steps", [](RunConfig& c, const std::string& v) { c.text_head_steps = parse_size("text_head_steps", v); }},
        {"text_head_batch", [](RunConfig& c, const std::string& v) { c.text_head_batch = parse_size("text_head_batch", v); }},
        {"synth_train_normal", [](RunConfig& c, const std::string& v) { c.synth_train_normal = parse_size("synth_train_normal", v); }},
        {"synth_train_abnormal", [](RunConfig& c, const std::string& v) { c.synth_train_abnormal = parse_size("synth_train_abnormal", v); }},
        {"synth_test_normal", [](RunConfig& c, const std::string& v) { c.synth_test_normal = parse_size("synth_test_normal", v); }},
        {"synth_test_abnormal", [](RunConfig& c, const std::string& v) { c.synth_test_abnormal = parse_size("synth_test_abnormal", v); }},
        {"synth_snippets_min", [](RunConfig& c, const std::string& v) { c.synth_snippets_min = parse_size("synth_snippets_min", v); }},
        {"synth_snippets_max", [](RunConfig& c, const std::string& v) { c.synth_snippets_max = parse_size("synth_snippets_max", v); }},
        {"synth_frames_per_snippet", [](RunConfig& c, const std::string& v) { c.synth_frames_per_snippet = parse_size("synth_frames_per_snippet", v); }},
        {"synth_dim_rgb", [](RunConfig& c, const std::string& v) { c.synth_dim_rgb = parse_size("synth_dim_rgb", v); }},
        {"synth_dim_flow", [](RunConfig& c, const std::string& v) { c.synth_dim_flow = parse_size("synth_dim_flow", v); }},
        {"synth_dim_audio", [](RunConfig& c, const std::string& v) { c.synth_dim_audio = parse_size("synth_dim_audio", v); }},
        {"synth_strength", [](RunConfig& c, const std::string& v) { c.synth_strength = parse_double("synth_strength", v); }},
        {"synth_span_min", [](RunConfig& c, const std::string& v) { c.synth_span_min = parse_double("synth_span_min", v); }},
        {"synth_span_max", [](RunConfig& c, const std::string& v) { c.synth_span_max = parse_double("synth_span_max", v); }},
    };
    auto it = setters.find(key);
    if (it == setters.end()) {
        throw ConfigError("unknown configuration key '" + key + "'");
    }
    it->second(*this, value);
}

void RunConfig::validate() const {
    modality_set();
    activation_from_name(ffn_activation);
    if (positional != "learned" && positional != "none") {
        throw ConfigError("positional must be 'learned' or 'none', got '" + positional + "'");
    }
    if (msbt_tokens != "reduced" && msbt_tokens != "fixed") {
        throw ConfigError("msbt_tokens must be 'reduced' or 'fixed', got '" + msbt_tokens + "'");
    }
    if (msbt_weight_activation != "sigmoid" && msbt_weight_activation != "softmax") {
        throw ConfigError("msbt_weight_activation must be 'sigmoid' or 'softmax', got '" +
                          msbt_weight_activation + "'");
    }
    if (embedder != "hash" && embedder != "file") {
        throw ConfigError("embedder must be 'hash' or 'file', got '" + embedder + "'");
    }
    if (embedder == "file" && embedding_file.empty()) {
        throw ConfigError("embedder 'file' requires embedding_file");
    }
    if (delta <= 0.0 || delta >= 1.0) {
        throw ConfigError("delta must lie in (0, 1), got " + std::to_string(delta));
    }
    if (num_samplings == 0) {
        throw ConfigError("num_samplings must be at least 1");
    }
    if (context_samples == 0) {
        throw ConfigError("context_samples must be at least 1");
    }
    if (text_dim == 0) {
        throw ConfigError("text_dim must be positive");
    }
    generated_count();
    encoder_config(*this).validate();
    msbt_config(*this).validate();
    train_config(*this).validate();
    if (synth_snippets_min == 0 || synth_snippets_max < synth_snippets_min) {
        throw ConfigError("synthetic snippet range is empty");
    }
    if (synth_span_min <= 0.0 || synth_span_max > 1.0 || synth_span_max < synth_span_min) {
        throw ConfigError("synthetic span fraction range must satisfy 0 < min <= max <= 1");
    }
    if (synth_strength < 0.0) {
        throw ConfigError("synth_strength must be non-negative");
    }
    if (synth_frames_per_snippet == 0) {
        throw ConfigError("synth_frames_per_snippet must be at least 1");
    }
}

std::vector<Modality> RunConfig::modality_set() const {
    return parse_modalities(modalities);
}

std::optional<std::size_t> RunConfig::generated_count() const {
    if (num_generated == "auto") {
        return std::nullopt;
    }
    return parse_size("num_generated", num_generated);
}

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#' || stripped[0] == ';') {
            continue;
        }
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ParseError(origin + ":" + std::to_string(line_no) +
                             ": expected 'key = value', got '" + stripped + "'");
        }
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty()) {
            throw ParseError(origin + ":" + std::to_string(line_no) + ": empty key");
        }
        cfg.set(key, value);
    }
    cfg.validate();
    return cfg;
}

RunConfig read_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config file '" + path + "'");
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_run_config(buffer.str(), path);
}

EncoderConfig encoder_config(const RunConfig& cfg) {
    EncoderConfig enc;
    enc.embed_dim = cfg.embed_dim;
    enc.num_heads = cfg.num_heads;
    enc.num_layers = cfg.encoder_layers;
    enc.learned_positional = cfg.positional == "learned";
    enc.max_positions = cfg.positional_table;
    enc.ffn_mult = cfg.ffn_mult;
    enc.ffn_act = activation_from_name(cfg.ffn_activation);
    return enc;
}

MsbtConfig msbt_config(const RunConfig& cfg) {
    MsbtConfig msbt;
    msbt.fusion_layers = cfg.fusion_layers;
    msbt.first_tokens = cfg.first_tokens;
    msbt.weight_layers = cfg.weight_layers;
    msbt.reduce_tokens = cfg.msbt_tokens == "reduced";
    msbt.use_cross_transformer = cfg.msbt_cross_transformer;
    msbt.weighting = cfg.msbt_weighting;
    msbt.softmax_weights = cfg.msbt_weight_activation == "softmax";
    msbt.shared_pair_params = cfg.msbt_shared_pair_params;
    return msbt;
}

TrainConfig train_config(const RunConfig& cfg) {
    TrainConfig train;
    train.top_k = cfg.top_k;
    train.alpha = cfg.alpha;
    train.batch_size = cfg.batch_size;
    train.learning_rate = cfg.learning_rate;
    train.train_steps = cfg.train_steps;
    train.seed = cfg.seed;
    return train;
}

} // namespace tgvad
