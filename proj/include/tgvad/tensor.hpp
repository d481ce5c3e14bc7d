#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace tgvad {

class Tape;

/// Dense row-major matrix of 64-bit floats. Rank is 1 or 2; a rank-1 tensor
/// of n entries behaves as a 1 x n row wherever a matrix is expected.
/// Values are immutable once a tensor has entered a tape; only the gradient
/// buffer is written after construction. Copies share storage.
class Tensor {
public:
    Tensor();
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> values);

    static Tensor zeros(std::size_t rows, std::size_t cols);
    static Tensor full(std::size_t rows, std::size_t cols, double value);
    static Tensor identity(std::size_t n);
    static Tensor row(std::vector<double> values);
    static Tensor column(std::vector<double> values);
    static Tensor from_rows(const std::vector<std::vector<double>>& rows);

    bool defined() const { return static_cast<bool>(d_); }

    const std::vector<std::size_t>& shape() const;
    std::size_t rank() const;
    std::size_t size() const;
    /// Row/column extents of the matrix view (rank-1 tensors are 1 x n).
    std::size_t rows() const;
    std::size_t cols() const;

    double at(std::size_t r, std::size_t c) const;
    double& at(std::size_t r, std::size_t c);
    /// The single entry of a 1-element tensor.
    double item() const;

    const std::vector<double>& values() const;
    std::vector<double>& values();

    bool requires_grad() const;
    Tensor& set_requires_grad(bool enabled);

    bool has_grad() const;
    const std::vector<double>& grad() const;
    /// Gradient buffer, allocated zero-filled on first access.
    std::vector<double>& grad_buffer();
    void zero_grad();

    /// Stable identity of the underlying storage, used as the tape node key.
    const void* node_key() const;

    std::string shape_string() const;

private:
    friend class Tape;
    struct Data;
    std::shared_ptr<Data> d_;
};

enum class Activation { Identity, ReLU, GELU, Sigmoid };

/// Maps "relu" / "gelu" / "sigmoid" / "identity"; ConfigError otherwise.
Activation activation_from_name(const std::string& name);
const char* activation_name(Activation act);

constexpr double kLayerNormEpsilon = 1e-5;

/// Records every operation it executes, in execution order (which is a
/// topological order by construction), and replays them in reverse on
/// backward(). Tensors not produced by this tape are leaves; gradients are
/// summed into every requires_grad leaf. A tape is single-threaded; distinct
/// tapes may run on distinct threads as long as they do not share leaves
/// whose gradients are being written concurrently.
class Tape {
public:
    Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    ~Tape();

    Tensor matmul(const Tensor& a, const Tensor& b);
    /// a * b^T without materializing the transpose.
    Tensor matmul_nt(const Tensor& a, const Tensor& b);
    Tensor transpose(const Tensor& x);

    Tensor add(const Tensor& a, const Tensor& b);
    Tensor sub(const Tensor& a, const Tensor& b);
    Tensor mul(const Tensor& a, const Tensor& b);
    Tensor scale(const Tensor& x, double c);
    /// Multiplies every entry of x by the scalar tensor s (1 element).
    Tensor scale_by(const Tensor& x, const Tensor& s);
    /// x + bias broadcast over rows; bias is 1 x n (or rank-1 n).
    Tensor add_row_bias(const Tensor& x, const Tensor& bias);

    /// Row-wise softmax with per-row max subtraction. NumericError on
    /// non-finite input.
    Tensor softmax_rows(const Tensor& x);
    /// Per-row standardization (epsilon-stabilized) followed by the affine
    /// map gain * x + bias; gain and bias have one entry per column.
    Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);

    Tensor relu(const Tensor& x);
    Tensor gelu(const Tensor& x);
    Tensor sigmoid(const Tensor& x);
    Tensor activation(const Tensor& x, Activation act);

    Tensor concat_rows(const std::vector<Tensor>& parts);
    Tensor concat_cols(const std::vector<Tensor>& parts);
    /// Rows [begin, end) of x.
    Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
    /// Row lookup table: out[i] = x[indices[i]]. Gradients scatter-add back,
    /// so repeated indices accumulate.
    Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& indices);

    Tensor sum(const Tensor& x);
    Tensor mean_rows(const Tensor& x);

    /// Mean of the k largest entries (ties broken by lower index).
    /// k is clamped to the entry count; ContractError on empty input.
    Tensor topk_mean(const Tensor& scores, std::size_t k);

    /// Binary cross-entropy of a 1-element probability against target y,
    /// with the probability clamped to [1e-7, 1 - 1e-7] before the logs.
    Tensor bce(const Tensor& prob, double target);

    /// Reverse pass from a scalar output. ContractError if output has more
    /// than one entry or was not produced by this tape. Non-leaf gradients
    /// are reset first, so repeated calls after leaf grad resets reproduce
    /// identical results.
    void backward(const Tensor& output);

    std::size_t op_count() const;
    std::size_t node_count() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;

    Tensor record(const std::string& name, const std::vector<Tensor>& inputs, Tensor output,
                  std::function<void()> backward_fn);
    int node_id(const Tensor& t) const;
};

/// One affine layer of an MLP: y = act(x * weight + bias).
struct DenseLayer {
    Tensor weight; // in x out
    Tensor bias;   // 1 x out
    Activation act = Activation::Identity;
};

/// Chains dense layers. DimensionError when consecutive widths disagree.
Tensor mlp_forward(Tape& tape, const Tensor& x, const std::vector<DenseLayer>& layers);

/// Plain top-k mean on raw values (the non-autodiff counterpart of
/// Tape::topk_mean, used at evaluation time and by tests).
double topk_mean(const std::vector<double>& scores, std::size_t k);

} // namespace tgvad
