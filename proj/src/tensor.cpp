#include "tgvad/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "tgvad/errors.hpp"

namespace tgvad {

namespace {

constexpr double kBceClamp = 1e-7;

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t extent : shape) {
        n *= extent;
    }
    return n;
}

std::string shape_to_string(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? " x " : "") << shape[i];
    }
    os << "]";
    return os.str();
}

// c(m x n) = a(m x k) * b(k x n); adds into c when accumulate is set.
void mm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
        bool accumulate) {
#pragma omp parallel for schedule(static) if (m * n * k > 32768)
    for (long long ii = 0; ii < static_cast<long long>(m); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        double* crow = c + i * n;
        if (!accumulate) {
            std::fill(crow, crow + n, 0.0);
        }
        const double* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) {
                continue;
            }
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

// c(m x n) = a(m x k) * b(n x k)^T; row-by-row dot products. Four fixed
// accumulators keep the summation order deterministic while exposing ILP.
void mm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
           bool accumulate) {
#pragma omp parallel for schedule(static) if (m * n * k > 32768)
    for (long long ii = 0; ii < static_cast<long long>(m); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
            std::size_t p = 0;
            for (; p + 4 <= k; p += 4) {
                acc0 += arow[p] * brow[p];
                acc1 += arow[p + 1] * brow[p + 1];
                acc2 += arow[p + 2] * brow[p + 2];
                acc3 += arow[p + 3] * brow[p + 3];
            }
            double acc = (acc0 + acc1) + (acc2 + acc3);
            for (; p < k; ++p) {
                acc += arow[p] * brow[p];
            }
            crow[j] = accumulate ? crow[j] + acc : acc;
        }
    }
}

// c(k x n) += a(m x k)^T * g(m x n).
void mm_tn_add(const double* a, const double* g, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
#pragma omp parallel for schedule(static) if (m * n * k > 32768)
    for (long long pp = 0; pp < static_cast<long long>(k); ++pp) {
        const auto p = static_cast<std::size_t>(pp);
        double* crow = c + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = a[i * k + p];
            if (av == 0.0) {
                continue;
            }
            const double* grow = g + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += av * grow[j];
            }
        }
    }
}

void axpy(std::vector<double>& dst, const std::vector<double>& src, double c) {
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] += c * src[i];
    }
}

} // namespace

struct Tensor::Data {
    std::vector<std::size_t> shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
    // True when a gradient must flow through this node (leaf with
    // requires_grad, or produced from such a node). Set by the tape.
    bool needs_grad = false;
};

Tensor::Tensor() = default;

Tensor::Tensor(std::vector<std::size_t> shape) : d_(std::make_shared<Data>()) {
    if (shape.empty() || shape.size() > 2) {
        throw DimensionError("tensor rank must be 1 or 2, got shape " + shape_to_string(shape));
    }
    d_->shape = std::move(shape);
    d_->values.assign(shape_product(d_->shape), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : Tensor(std::move(shape)) {
    if (values.size() != d_->values.size()) {
        throw DimensionError("value count " + std::to_string(values.size()) +
                             " does not match shape " + shape_to_string(d_->shape));
    }
    d_->values = std::move(values);
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) {
    return Tensor({rows, cols});
}

Tensor Tensor::full(std::size_t rows, std::size_t cols, double value) {
    Tensor t({rows, cols});
    std::fill(t.values().begin(), t.values().end(), value);
    return t;
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        t.at(i, i) = 1.0;
    }
    return t;
}

Tensor Tensor::row(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({1, n}, std::move(values));
}

Tensor Tensor::column(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n, 1}, std::move(values));
}

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) {
        throw DimensionError("from_rows requires at least one row");
    }
    const std::size_t n = rows.front().size();
    Tensor t({rows.size(), n});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != n) {
            throw DimensionError("from_rows requires equal-length rows");
        }
        std::copy(rows[i].begin(), rows[i].end(), t.values().begin() + i * n);
    }
    return t;
}

const std::vector<std::size_t>& Tensor::shape() const {
    return d_->shape;
}

std::size_t Tensor::rank() const {
    return d_->shape.size();
}

std::size_t Tensor::size() const {
    return d_->values.size();
}

std::size_t Tensor::rows() const {
    return rank() == 1 ? 1 : d_->shape[0];
}

std::size_t Tensor::cols() const {
    return rank() == 1 ? d_->shape[0] : d_->shape[1];
}

double Tensor::at(std::size_t r, std::size_t c) const {
    return d_->values[r * cols() + c];
}

double& Tensor::at(std::size_t r, std::size_t c) {
    return d_->values[r * cols() + c];
}

double Tensor::item() const {
    if (size() != 1) {
        throw ContractError("item() requires a 1-element tensor, got shape " + shape_string());
    }
    return d_->values[0];
}

const std::vector<double>& Tensor::values() const {
    return d_->values;
}

std::vector<double>& Tensor::values() {
    return d_->values;
}

bool Tensor::requires_grad() const {
    return d_->requires_grad;
}

Tensor& Tensor::set_requires_grad(bool enabled) {
    d_->requires_grad = enabled;
    d_->needs_grad = enabled;
    return *this;
}

bool Tensor::has_grad() const {
    return !d_->grad.empty();
}

const std::vector<double>& Tensor::grad() const {
    if (d_->grad.empty()) {
        throw ContractError("tensor has no gradient; run backward() first");
    }
    return d_->grad;
}

std::vector<double>& Tensor::grad_buffer() {
    if (d_->grad.empty()) {
        d_->grad.assign(d_->values.size(), 0.0);
    }
    return d_->grad;
}

void Tensor::zero_grad() {
    if (!d_->grad.empty()) {
        std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
    }
}

const void* Tensor::node_key() const {
    return d_.get();
}

std::string Tensor::shape_string() const {
    return shape_to_string(d_->shape);
}

Activation activation_from_name(const std::string& name) {
    if (name == "relu") return Activation::ReLU;
    if (name == "gelu") return Activation::GELU;
    if (name == "sigmoid") return Activation::Sigmoid;
    if (name == "identity" || name == "none") return Activation::Identity;
    throw ConfigError("unknown activation '" + name + "' (expected relu/gelu/sigmoid/identity)");
}

const char* activation_name(Activation act) {
    switch (act) {
        case Activation::Identity: return "identity";
        case Activation::ReLU: return "relu";
        case Activation::GELU: return "gelu";
        case Activation::Sigmoid: return "sigmoid";
    }
    return "identity";
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

struct Tape::Impl {
    struct Entry {
        std::string op;
        std::vector<int> inputs;
        int output = -1;
        std::function<void()> backward_fn;
    };

    std::vector<Entry> entries;
    std::unordered_map<const void*, int> ids;
    std::vector<std::shared_ptr<Tensor::Data>> nodes;
    std::unordered_set<int> produced;

    int intern(const Tensor& t) {
        auto it = ids.find(t.node_key());
        if (it != ids.end()) {
            return it->second;
        }
        const int id = static_cast<int>(nodes.size());
        ids.emplace(t.node_key(), id);
        nodes.push_back(t.d_);
        return id;
    }
};

Tape::Tape() : impl_(std::make_unique<Impl>()) {}

Tape::~Tape() = default;

std::size_t Tape::op_count() const {
    return impl_->entries.size();
}

std::size_t Tape::node_count() const {
    return impl_->nodes.size();
}

int Tape::node_id(const Tensor& t) const {
    auto it = impl_->ids.find(t.node_key());
    return it == impl_->ids.end() ? -1 : it->second;
}

Tensor Tape::record(const std::string& name, const std::vector<Tensor>& inputs, Tensor output,
                    std::function<void()> backward_fn) {
    bool needs = false;
    std::vector<int> input_ids;
    input_ids.reserve(inputs.size());
    for (const Tensor& in : inputs) {
        input_ids.push_back(impl_->intern(in));
        needs = needs || in.d_->needs_grad;
    }
    output.d_->needs_grad = needs;
    const int out_id = impl_->intern(output);
    impl_->produced.insert(out_id);
    impl_->entries.push_back({name, std::move(input_ids), out_id, std::move(backward_fn)});
    return output;
}

void Tape::backward(const Tensor& output) {
    if (output.size() != 1) {
        throw ContractError("backward() requires a scalar output, got shape " +
                            output.shape_string());
    }
    const int out_id = node_id(output);
    if (out_id < 0 || !impl_->produced.count(out_id)) {
        throw ContractError("backward() output was not produced by this tape");
    }
    // Non-leaf gradients are scoped to a single pass; reset them so a second
    // pass over the same graph reproduces identical numbers. Allocating every
    // produced node's buffer here also gives dead branches (results computed
    // but never fed into the output) a well-defined zero gradient.
    for (int id : impl_->produced) {
        auto& node = impl_->nodes[static_cast<std::size_t>(id)];
        node->grad.assign(node->values.size(), 0.0);
    }
    output.d_->grad.assign(1, 1.0);
    for (auto it = impl_->entries.rbegin(); it != impl_->entries.rend(); ++it) {
        if (it->backward_fn) {
            it->backward_fn();
        }
    }
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul shape mismatch: " + a.shape_string() + " * " +
                             b.shape_string());
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out({m, n});
    mm(a.values().data(), b.values().data(), out.values().data(), m, k, n, false);
    auto backward = [a = a, b = b, out, m, k, n]() mutable {
        const auto& g = out.grad();
        if (a.d_->needs_grad) {
            mm_nt(g.data(), b.values().data(), a.grad_buffer().data(), m, n, k, true);
        }
        if (b.d_->needs_grad) {
            mm_tn_add(a.values().data(), g.data(), b.grad_buffer().data(), m, k, n);
        }
    };
    return record("matmul", {a, b}, std::move(out), std::move(backward));
}

Tensor Tape::matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols()) {
        throw DimensionError("matmul_nt shape mismatch: " + a.shape_string() + " * " +
                             b.shape_string() + "^T");
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    Tensor out({m, n});
    mm_nt(a.values().data(), b.values().data(), out.values().data(), m, k, n, false);
    auto backward = [a = a, b = b, out, m, k, n]() mutable {
        const auto& g = out.grad();
        if (a.d_->needs_grad) {
            mm(g.data(), b.values().data(), a.grad_buffer().data(), m, n, k, true);
        }
        if (b.d_->needs_grad) {
            mm_tn_add(g.data(), a.values().data(), b.grad_buffer().data(), m, n, k);
        }
    };
    return record("matmul_nt", {a, b}, std::move(out), std::move(backward));
}

Tensor Tape::transpose(const Tensor& x) {
    const std::size_t m = x.rows(), n = x.cols();
    Tensor out({n, m});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out.at(j, i) = x.at(i, j);
        }
    }
    auto backward = [x = x, out, m, n]() mutable {
        if (!x.d_->needs_grad) {
            return;
        }
        const auto& g = out.grad();
        auto& dx = x.grad_buffer();
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t i = 0; i < m; ++i) {
                dx[i * n + j] += g[j * m + i];
            }
        }
    };
    return record("transpose", {x}, std::move(out), std::move(backward));
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError("add shape mismatch: " + a.shape_string() + " vs " +
                             b.shape_string());
    }
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.values()[i] = a.values()[i] + b.values()[i];
    }
    auto backward = [a = a, b = b, out]() mutable {
        const auto& g = out.grad();
        if (a.d_->needs_grad) axpy(a.grad_buffer(), g, 1.0);
        if (b.d_->needs_grad) axpy(b.grad_buffer(), g, 1.0);
    };
    return record("add", {a, b}, std::move(out), std::move(backward));
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError("sub shape mismatch: " + a.shape_string() + " vs " +
                             b.shape_string());
    }
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.values()[i] = a.values()[i] - b.values()[i];
    }
    auto backward = [a = a, b = b, out]() mutable {
        const auto& g = out.grad();
        if (a.d_->needs_grad) axpy(a.grad_buffer(), g, 1.0);
        if (b.d_->needs_grad) axpy(b.grad_buffer(), g, -1.0);
    };
    return record("sub", {a, b}, std::move(out), std::move(backward));
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError("mul shape mismatch: " + a.shape_string() + " vs " +
                             b.shape_string());
    }
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.values()[i] = a.values()[i] * b.values()[i];
    }
    auto backward = [a = a, b = b, out]() mutable {
        const auto& g = out.grad();
        if (a.d_->needs_grad) {
            auto& da = a.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * b.values()[i];
        }
        if (b.d_->needs_grad) {
            auto& db = b.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * a.values()[i];
        }
    };
    return record("mul", {a, b}, std::move(out), std::move(backward));
}

Tensor Tape::scale(const Tensor& x, double c) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.values()[i] = c * x.values()[i];
    }
    auto backward = [x = x, out, c]() mutable {
        if (x.d_->needs_grad) axpy(x.grad_buffer(), out.grad(), c);
    };
    return record("scale", {x}, std::move(out), std::move(backward));
}

Tensor Tape::scale_by(const Tensor& x, const Tensor& s) {
    if (s.size() != 1) {
        throw DimensionError("scale_by expects a 1-element scalar, got " + s.shape_string());
    }
    const double sv = s.values()[0];
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.values()[i] = sv * x.values()[i];
    }
    auto backward = [x = x, s = s, out, sv]() mutable {
        const auto& g = out.grad();
        if (x.d_->needs_grad) axpy(x.grad_buffer(), g, sv);
        if (s.d_->needs_grad) {
            double acc = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * x.values()[i];
            s.grad_buffer()[0] += acc;
        }
    };
    return record("scale_by", {x, s}, std::move(out), std::move(backward));
}

Tensor Tape::add_row_bias(const Tensor& x, const Tensor& bias) {
    if (bias.rows() != 1 || bias.cols() != x.cols()) {
        throw DimensionError("add_row_bias: bias " + bias.shape_string() +
                             " does not match row width of " + x.shape_string());
    }
    const std::size_t m = x.rows(), n = x.cols();
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out.at(i, j) = x.at(i, j) + bias.values()[j];
        }
    }
    auto backward = [x = x, bias = bias, out, m, n]() mutable {
        const auto& g = out.grad();
        if (x.d_->needs_grad) axpy(x.grad_buffer(), g, 1.0);
        if (bias.d_->needs_grad) {
            auto& db = bias.grad_buffer();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    db[j] += g[i * n + j];
                }
            }
        }
    };
    return record("add_row_bias", {x, bias}, std::move(out), std::move(backward));
}

Tensor Tape::softmax_rows(const Tensor& x) {
    const std::size_t m = x.rows(), n = x.cols();
    for (double v : x.values()) {
        if (!std::isfinite(v)) {
            throw NumericError("softmax_rows requires finite input");
        }
    }
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        double mx = x.at(i, 0);
        for (std::size_t j = 1; j < n; ++j) {
            mx = std::max(mx, x.at(i, j));
        }
        double denom = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double e = std::exp(x.at(i, j) - mx);
            out.at(i, j) = e;
            denom += e;
        }
        for (std::size_t j = 0; j < n; ++j) {
            out.at(i, j) /= denom;
        }
    }
    auto backward = [x = x, out, m, n]() mutable {
        if (!x.d_->needs_grad) {
            return;
        }
        const auto& g = out.grad();
        auto& dx = x.grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
            const double* srow = out.values().data() + i * n;
            const double* grow = g.data() + i * n;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                dot += srow[j] * grow[j];
            }
            for (std::size_t j = 0; j < n; ++j) {
                dx[i * n + j] += srow[j] * (grow[j] - dot);
            }
        }
    };
    return record("softmax_rows", {x}, std::move(out), std::move(backward));
}

Tensor Tape::layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
    const std::size_t m = x.rows(), n = x.cols();
    if (gain.size() != n || bias.size() != n) {
        throw DimensionError("layer_norm: gain/bias must have " + std::to_string(n) +
                             " entries, got " + gain.shape_string() + " and " +
                             bias.shape_string());
    }
    Tensor out({m, n});
    // Normalized rows are kept for the backward pass.
    auto xhat = std::make_shared<std::vector<double>>(m * n);
    auto inv_sigma = std::make_shared<std::vector<double>>(m);
    for (std::size_t i = 0; i < m; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            mean += x.at(i, j);
        }
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = x.at(i, j) - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + kLayerNormEpsilon);
        (*inv_sigma)[i] = inv;
        for (std::size_t j = 0; j < n; ++j) {
            const double h = (x.at(i, j) - mean) * inv;
            (*xhat)[i * n + j] = h;
            out.at(i, j) = gain.values()[j] * h + bias.values()[j];
        }
    }
    auto backward = [x = x, gain = gain, bias = bias, out, xhat, inv_sigma, m, n]() mutable {
        const auto& g = out.grad();
        if (gain.d_->needs_grad) {
            auto& dg = gain.grad_buffer();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    dg[j] += g[i * n + j] * (*xhat)[i * n + j];
                }
            }
        }
        if (bias.d_->needs_grad) {
            auto& db = bias.grad_buffer();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    db[j] += g[i * n + j];
                }
            }
        }
        if (x.d_->needs_grad) {
            auto& dx = x.grad_buffer();
            for (std::size_t i = 0; i < m; ++i) {
                double sum_dh = 0.0;
                double sum_dh_h = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const double dh = g[i * n + j] * gain.values()[j];
                    sum_dh += dh;
                    sum_dh_h += dh * (*xhat)[i * n + j];
                }
                const double inv_n = 1.0 / static_cast<double>(n);
                for (std::size_t j = 0; j < n; ++j) {
                    const double dh = g[i * n + j] * gain.values()[j];
                    const double h = (*xhat)[i * n + j];
                    dx[i * n + j] +=
                        (*inv_sigma)[i] * (dh - inv_n * sum_dh - h * inv_n * sum_dh_h);
                }
            }
        }
    };
    return record("layer_norm", {x, gain, bias}, std::move(out), std::move(backward));
}

Tensor Tape::relu(const Tensor& x) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out.values()[i] = x.values()[i] > 0.0 ? x.values()[i] : 0.0;
    }
    auto backward = [x = x, out]() mutable {
        if (!x.d_->needs_grad) {
            return;
        }
        const auto& g = out.grad();
        auto& dx = x.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (x.values()[i] > 0.0) {
                dx[i] += g[i];
            }
        }
    };
    return record("relu", {x}, std::move(out), std::move(backward));
}

Tensor Tape::gelu(const Tensor& x) {
    // tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
    static const double kAlpha = std::sqrt(2.0 / M_PI);
    constexpr double kCubic = 0.044715;
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x.values()[i];
        const double u = kAlpha * (v + kCubic * v * v * v);
        out.values()[i] = 0.5 * v * (1.0 + std::tanh(u));
    }
    auto backward = [x = x, out]() mutable {
        if (!x.d_->needs_grad) {
            return;
        }
        const auto& g = out.grad();
        auto& dx = x.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double v = x.values()[i];
            const double u = kAlpha * (v + kCubic * v * v * v);
            const double t = std::tanh(u);
            const double sech2 = 1.0 - t * t;
            const double du = kAlpha * (1.0 + 3.0 * kCubic * v * v);
            dx[i] += g[i] * (0.5 * (1.0 + t) + 0.5 * v * sech2 * du);
        }
    };
    return record("gelu", {x}, std::move(out), std::move(backward));
}

Tensor Tape::sigmoid(const Tensor& x) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out.values()[i] = 1.0 / (1.0 + std::exp(-x.values()[i]));
    }
    auto backward = [x = x, out]() mutable {
        if (!x.d_->needs_grad) {
            return;
        }
        const auto& g = out.grad();
        auto& dx = x.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double y = out.values()[i];
            dx[i] += g[i] * y * (1.0 - y);
        }
    };
    return record("sigmoid", {x}, std::move(out), std::move(backward));
}

Tensor Tape::activation(const Tensor& x, Activation act) {
    switch (act) {
        case Activation::Identity: return scale(x, 1.0);
        case Activation::ReLU: return relu(x);
        case Activation::GELU: return gelu(x);
        case Activation::Sigmoid: return sigmoid(x);
    }
    throw ConfigError("unhandled activation");
}

Tensor Tape::concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) {
        throw ContractError("concat_rows requires at least one part");
    }
    const std::size_t n = parts.front().cols();
    std::size_t m = 0;
    for (const Tensor& p : parts) {
        if (p.cols() != n) {
            throw DimensionError("concat_rows: column mismatch " + p.shape_string() + " vs " +
                                 parts.front().shape_string());
        }
        m += p.rows();
    }
    Tensor out({m, n});
    std::size_t r = 0;
    for (const Tensor& p : parts) {
        std::copy(p.values().begin(), p.values().end(), out.values().begin() + r * n);
        r += p.rows();
    }
    auto backward = [parts = parts, out, n]() mutable {
        const auto& g = out.grad();
        std::size_t r = 0;
        for (Tensor& p : parts) {
            if (p.d_->needs_grad) {
                auto& dp = p.grad_buffer();
                for (std::size_t i = 0; i < dp.size(); ++i) {
                    dp[i] += g[r * n + i];
                }
            }
            r += p.rows();
        }
    };
    return record("concat_rows", parts, std::move(out), std::move(backward));
}

Tensor Tape::concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) {
        throw ContractError("concat_cols requires at least one part");
    }
    const std::size_t m = parts.front().rows();
    std::size_t n = 0;
    for (const Tensor& p : parts) {
        if (p.rows() != m) {
            throw DimensionError("concat_cols: row mismatch " + p.shape_string() + " vs " +
                                 parts.front().shape_string());
        }
        n += p.cols();
    }
    Tensor out({m, n});
    std::size_t c0 = 0;
    for (const Tensor& p : parts) {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < p.cols(); ++j) {
                out.at(i, c0 + j) = p.at(i, j);
            }
        }
        c0 += p.cols();
    }
    auto backward = [parts = parts, out, m, n]() mutable {
        const auto& g = out.grad();
        std::size_t c0 = 0;
        for (Tensor& p : parts) {
            const std::size_t pc = p.cols();
            if (p.d_->needs_grad) {
                auto& dp = p.grad_buffer();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < pc; ++j) {
                        dp[i * pc + j] += g[i * n + c0 + j];
                    }
                }
            }
            c0 += pc;
        }
    };
    return record("concat_cols", parts, std::move(out), std::move(backward));
}

Tensor Tape::slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
    if (begin >= end || end > x.rows()) {
        throw DimensionError("slice_rows [" + std::to_string(begin) + ", " + std::to_string(end) +
                             ") out of range for " + x.shape_string());
    }
    const std::size_t n = x.cols();
    Tensor out({end - begin, n});
    std::copy(x.values().begin() + begin * n, x.values().begin() + end * n,
              out.values().begin());
    auto backward = [x = x, out, begin, n]() mutable {
        if (!x.d_->needs_grad) {
            return;
        }
        const auto& g = out.grad();
        auto& dx = x.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            dx[begin * n + i] += g[i];
        }
    };
    return record("slice_rows", {x}, std::move(out), std::move(backward));
}

Tensor Tape::gather_rows(const Tensor& x, const std::vector<std::size_t>& indices) {
    const std::size_t n = x.cols();
    for (std::size_t idx : indices) {
        if (idx >= x.rows()) {
            throw DimensionError("gather_rows index " + std::to_string(idx) +
                                 " out of range for " + x.shape_string());
        }
    }
    Tensor out({indices.size(), n});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const double* src = x.values().data() + indices[i] * n;
        std::copy(src, src + n, out.values().begin() + i * n);
    }
    auto idx = std::make_shared<std::vector<std::size_t>>(indices);
    auto backward = [x = x, out, idx, n]() mutable {
        if (!x.d_->needs_grad) {
            return;
        }
        const auto& g = out.grad();
        auto& dx = x.grad_buffer();
        for (std::size_t i = 0; i < idx->size(); ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                dx[(*idx)[i] * n + j] += g[i * n + j];
            }
        }
    };
    return record("gather_rows", {x}, std::move(out), std::move(backward));
}

Tensor Tape::sum(const Tensor& x) {
    Tensor out({1, 1});
    out.values()[0] = std::accumulate(x.values().begin(), x.values().end(), 0.0);
    auto backward = [x = x, out]() mutable {
        if (!x.d_->needs_grad) {
            return;
        }
        const double g = out.grad()[0];
        auto& dx = x.grad_buffer();
        for (double& v : dx) {
            v += g;
        }
    };
    return record("sum", {x}, std::move(out), std::move(backward));
}

Tensor Tape::mean_rows(const Tensor& x) {
    const std::size_t m = x.rows(), n = x.cols();
    Tensor out({1, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out.values()[j] += x.at(i, j);
        }
    }
    for (std::size_t j = 0; j < n; ++j) {
        out.values()[j] /= static_cast<double>(m);
    }
    auto backward = [x = x, out, m, n]() mutable {
        if (!x.d_->needs_grad) {
            return;
        }
        const auto& g = out.grad();
        auto& dx = x.grad_buffer();
        const double inv_m = 1.0 / static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                dx[i * n + j] += g[j] * inv_m;
            }
        }
    };
    return record("mean_rows", {x}, std::move(out), std::move(backward));
}

Tensor Tape::topk_mean(const Tensor& scores, std::size_t k) {
    const std::size_t n = scores.size();
    if (n == 0) {
        throw ContractError("topk_mean requires a non-empty score list");
    }
    if (k == 0) {
        throw ContractError("topk_mean requires k >= 1");
    }
    const std::size_t k_eff = std::min(k, n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores.values()[a] > scores.values()[b];
    });
    auto picked = std::make_shared<std::vector<std::size_t>>(order.begin(), order.begin() + k_eff);
    double total = 0.0;
    for (std::size_t idx : *picked) {
        total += scores.values()[idx];
    }
    Tensor out({1, 1});
    out.values()[0] = total / static_cast<double>(k_eff);
    auto backward = [scores = scores, out, picked, k_eff]() mutable {
        if (!scores.d_->needs_grad) {
            return;
        }
        const double g = out.grad()[0] / static_cast<double>(k_eff);
        auto& dx = scores.grad_buffer();
        for (std::size_t idx : *picked) {
            dx[idx] += g;
        }
    };
    return record("topk_mean", {scores}, std::move(out), std::move(backward));
}

Tensor Tape::bce(const Tensor& prob, double target) {
    if (prob.size() != 1) {
        throw DimensionError("bce expects a 1-element probability, got " + prob.shape_string());
    }
    const double p = prob.values()[0];
    const double c = std::clamp(p, kBceClamp, 1.0 - kBceClamp);
    Tensor out({1, 1});
    out.values()[0] = -target * std::log(c) - (1.0 - target) * std::log(1.0 - c);
    auto backward = [prob = prob, out, target, p, c]() mutable {
        if (!prob.d_->needs_grad) {
            return;
        }
        // Outside the clamp interval the loss is locally constant in p.
        if (p > kBceClamp && p < 1.0 - kBceClamp) {
            prob.grad_buffer()[0] += out.grad()[0] * (-target / c + (1.0 - target) / (1.0 - c));
        }
    };
    return record("bce", {prob}, std::move(out), std::move(backward));
}

Tensor mlp_forward(Tape& tape, const Tensor& x, const std::vector<DenseLayer>& layers) {
    Tensor h = x;
    for (const DenseLayer& layer : layers) {
        h = tape.add_row_bias(tape.matmul(h, layer.weight), layer.bias);
        h = tape.activation(h, layer.act);
    }
    return h;
}

double topk_mean(const std::vector<double>& scores, std::size_t k) {
    if (scores.empty()) {
        throw ContractError("topk_mean requires a non-empty score list");
    }
    if (k == 0) {
        throw ContractError("topk_mean requires k >= 1");
    }
    const std::size_t k_eff = std::min(k, scores.size());
    std::vector<double> sorted(scores);
    std::partial_sort(sorted.begin(), sorted.begin() + k_eff, sorted.end(),
                      std::greater<double>());
    double total = 0.0;
    for (std::size_t i = 0; i < k_eff; ++i) {
        total += sorted[i];
    }
    return total / static_cast<double>(k_eff);
}

} // namespace tgvad
