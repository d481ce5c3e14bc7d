#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "tgvad/tensor.hpp"

namespace tgvad {

enum class Init { Zero, One, XavierUniform, SmallNormal };

/// Owns every learnable tensor of a model, keyed by a hierarchical name.
/// Initial values depend only on (seed, name, shape), so construction order
/// never changes an initialization.
class ParamStore {
public:
    explicit ParamStore(std::uint64_t seed);

    /// Creates a fresh parameter; ContractError if the name exists.
    Tensor create(const std::string& name, std::size_t rows, std::size_t cols, Init init);
    /// Returns the existing parameter if present, otherwise creates it.
    /// Used for weight sharing between modules.
    Tensor create_or_get(const std::string& name, std::size_t rows, std::size_t cols, Init init);

    bool contains(const std::string& name) const;
    Tensor at(const std::string& name) const;

    const std::map<std::string, Tensor>& entries() const { return params_; }
    std::size_t parameter_count() const;

    void zero_grads();
    /// Plain SGD update: p -= lr * grad. Parameters without a gradient
    /// buffer are left untouched.
    void sgd_step(double lr);
    double grad_l2_norm() const;

    void save(const std::string& path) const;
    void save(std::ostream& out) const;
    /// Loads values into the existing parameters; ParseError on a name or
    /// shape mismatch with the file contents.
    void load(const std::string& path);
    void load(std::istream& in, std::size_t& offset, const std::string& origin);

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::map<std::string, Tensor> params_;
};

/// Per-head projection matrices plus the output projection that merges the
/// concatenated heads back to model width.
struct AttentionParams {
    std::vector<Tensor> wq;
    std::vector<Tensor> wk;
    std::vector<Tensor> wv;
    Tensor wo;
};

struct TransformerLayerParams {
    Tensor ln1_gain, ln1_bias;
    AttentionParams attn;
    Tensor ln2_gain, ln2_bias;
    std::vector<DenseLayer> ffn;
};

/// Cross-attention variant: queries come from one stream, keys/values from
/// another; each stream has its own pre-norm.
struct CrossTransformerLayerParams {
    Tensor ln_q_gain, ln_q_bias;
    Tensor ln_kv_gain, ln_kv_bias;
    AttentionParams attn;
    Tensor ln2_gain, ln2_bias;
    std::vector<DenseLayer> ffn;
};

AttentionParams make_attention(ParamStore& store, const std::string& prefix, std::size_t d_model,
                               std::size_t n_heads);
TransformerLayerParams make_transformer_layer(ParamStore& store, const std::string& prefix,
                                              std::size_t d_model, std::size_t n_heads,
                                              std::size_t ffn_mult, Activation ffn_act);
CrossTransformerLayerParams make_cross_transformer_layer(ParamStore& store,
                                                         const std::string& prefix,
                                                         std::size_t d_model, std::size_t n_heads,
                                                         std::size_t ffn_mult, Activation ffn_act);
/// Dense stack with `hidden_act` between layers and `final_act` on the last.
std::vector<DenseLayer> make_mlp(ParamStore& store, const std::string& prefix,
                                 const std::vector<std::size_t>& widths, Activation hidden_act,
                                 Activation final_act);

/// Single-head attention probabilities softmax(q k^T / sqrt(d)).
Tensor attention_probs(Tape& tape, const Tensor& q, const Tensor& k, double d);

/// Multi-head self-attention over x (n x d_model). The scale denominator d
/// is passed explicitly; this model family uses d = d_model.
Tensor msa(Tape& tape, const Tensor& x, const AttentionParams& params, double d);
/// Multi-head cross-attention: queries from q_in, keys/values from kv_in.
Tensor msa_cross(Tape& tape, const Tensor& q_in, const Tensor& kv_in,
                 const AttentionParams& params, double d);

/// Pre-norm residual block: z' = MSA(LN(z)) + z; out = FFN(LN(z')) + z'.
Tensor transformer_layer(Tape& tape, const Tensor& x, const TransformerLayerParams& params,
                         double d);
/// Same block structure with residuals on the query stream.
Tensor cross_transformer_layer(Tape& tape, const Tensor& queries, const Tensor& keyvalues,
                               const CrossTransformerLayerParams& params, double d);

} // namespace tgvad
