#include "intentrec/tensor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "intentrec/errors.hpp"

namespace intentrec {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap as_matrix(const Tensor& t) {
    return ConstMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                    static_cast<Eigen::Index>(t.cols()));
}

ConstMap as_matrix(std::span<const double> d, std::size_t rows, std::size_t cols) {
    return ConstMap(d.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MutMap as_matrix(std::span<double> d, std::size_t rows, std::size_t cols) {
    return MutMap(d.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

std::size_t shape_product(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                             " vs " + shape_string(b.shape()));
    }
}

}  // namespace

std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ", ";
        out << shape[i];
    }
    out << ']';
    return out.str();
}

// ---- Tensor ------------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_.empty()) shape_ = {1};
    for (std::size_t d : shape_) {
        if (d == 0) throw DimensionError("tensor dims must be >= 1, got " + shape_string(shape_));
    }
    if (shape_product(shape_) != data_.size()) {
        throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_string(shape_));
    }
}

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
    const std::size_t n = shape_product(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    std::vector<double> data;
    std::size_t cols = rows.size() ? rows.begin()->size() : 0;
    for (const auto& r : rows) {
        if (r.size() != cols) throw DimensionError("Tensor::matrix: ragged rows");
        data.insert(data.end(), r.begin(), r.end());
    }
    return Tensor({rows.size(), cols}, std::move(data));
}

Tensor Tensor::row(std::initializer_list<double> values) { return row(std::vector<double>(values)); }

Tensor Tensor::row(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

double Tensor::item() const {
    if (data_.size() != 1) {
        throw ContractError("item() on tensor of shape " + shape_string(shape_));
    }
    return data_[0];
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

// ---- parameters --------------------------------------------------------------

void Parameter::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

Parameter& ParameterSet::add(const std::string& name, Tensor init) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->grad.assign(init.size(), 0.0);
    p->value = std::move(init);
    p->index = params_.size();
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return *params_.back();
}

Parameter& ParameterSet::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return *params_[it->second];
}

const Parameter& ParameterSet::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return *params_[it->second];
}

bool ParameterSet::contains(const std::string& name) const { return index_.count(name) != 0; }

std::size_t ParameterSet::scalar_count() const noexcept {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
}

void ParameterSet::zero_grad() {
    for (auto& p : params_) p->zero_grad();
}

GradientBuffer::GradientBuffer(const ParameterSet& params) : grads_(params.size()) {
    sizes_.reserve(params.size());
    for (const auto& p : params) sizes_.push_back(p->value.size());
}

std::vector<double>& GradientBuffer::for_param(const Parameter& p) {
    auto& g = grads_.at(p.index);
    if (g.empty()) g.assign(sizes_[p.index], 0.0);
    return g;
}

void GradientBuffer::flush_into(ParameterSet& params) const {
    for (std::size_t i = 0; i < grads_.size(); ++i) {
        if (grads_[i].empty()) continue;
        auto& target = params[i].grad;
        if (target.size() != grads_[i].size()) target.assign(grads_[i].size(), 0.0);
        for (std::size_t j = 0; j < target.size(); ++j) target[j] += grads_[i][j];
    }
}

// ---- graph -------------------------------------------------------------------

const char* op_name(OpKind kind) {
    switch (kind) {
        case OpKind::Input: return "input";
        case OpKind::Param: return "param";
        case OpKind::Constant: return "constant";
        case OpKind::MatMul: return "matmul";
        case OpKind::MatMulNT: return "matmul_nt";
        case OpKind::Add: return "add";
        case OpKind::AddRow: return "add_row";
        case OpKind::Mul: return "mul";
        case OpKind::Scale: return "scale";
        case OpKind::Gelu: return "gelu";
        case OpKind::Softmax: return "softmax";
        case OpKind::Sigmoid: return "sigmoid";
        case OpKind::LayerNorm: return "layer_norm";
        case OpKind::GatherRows: return "gather_rows";
        case OpKind::MeanPoolRows: return "mean_pool_rows";
        case OpKind::MeanRows: return "mean_rows";
        case OpKind::ConcatCols: return "concat_cols";
        case OpKind::ConcatRows: return "concat_rows";
        case OpKind::SliceRows: return "slice_rows";
        case OpKind::SliceCols: return "slice_cols";
        case OpKind::ScaleRows: return "scale_rows";
        case OpKind::Sum: return "sum";
        case OpKind::CrossEntropy: return "weighted_cross_entropy";
        case OpKind::PositiveBce: return "weighted_positive_bce";
    }
    return "unknown";
}

const Tensor& Var::value() const { return graph_->value(id_); }
std::span<const double> Var::grad() const { return graph_->grad(id_); }

Graph::Node& Graph::push(Node node) {
    nodes_.push_back(std::move(node));
    Node& n = nodes_.back();
    if (!n.grad) n.grad = &n.own_grad;
    return n;
}

Var Graph::input(Tensor value, bool requires_grad) {
    Node n;
    n.kind = OpKind::Input;
    n.own = std::move(value);
    n.requires_grad = requires_grad;
    push(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Tensor value) {
    Node n;
    n.kind = OpKind::Constant;
    n.own = std::move(value);
    push(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Graph::param(Parameter& p) {
    if (auto it = bound_params_.find(&p); it != bound_params_.end()) return Var(this, it->second);
    Node n;
    n.kind = OpKind::Param;
    n.param = &p;
    n.requires_grad = true;
    if (sink_) {
        n.grad = &sink_->for_param(p);
    } else {
        if (p.grad.size() != p.value.size()) p.grad.assign(p.value.size(), 0.0);
        n.grad = &p.grad;
    }
    push(std::move(n));
    bound_params_[&p] = nodes_.size() - 1;
    return Var(this, nodes_.size() - 1);
}

Var Graph::record(OpKind kind, Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
#ifndef NDEBUG
    if (!value.all_finite()) {
        throw NumericError(std::string(op_name(kind)) + " produced a non-finite value");
    }
#endif
    Node n;
    n.kind = kind;
    n.own = std::move(value);
    n.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                  [this](std::size_t i) { return nodes_[i].requires_grad; });
    n.inputs = std::move(inputs);
    if (n.requires_grad) n.backward = std::move(fn);
    push(std::move(n));
    return Var(this, nodes_.size() - 1);
}

const Tensor& Graph::value(std::size_t id) const {
    const Node& n = nodes_.at(id);
    return n.param ? n.param->value : n.own;
}

std::span<const double> Graph::grad(std::size_t id) const { return *nodes_.at(id).grad; }

std::span<double> Graph::grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad->empty()) n.grad->assign(value(id).size(), 0.0);
    return *n.grad;
}

void Graph::backward(Var loss) {
    if (loss.value().size() != 1) {
        throw ContractError("backward requires a scalar loss, got shape " +
                            shape_string(loss.value().shape()));
    }
    for (Node& n : nodes_) n.own_grad.clear();
    if (!nodes_[loss.id()].requires_grad) return;
    grad_buffer(loss.id())[0] += 1.0;
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.backward || n.grad->empty()) continue;
        n.backward(*this, id);
    }
}

// ---- ops ---------------------------------------------------------------------

namespace {

bool wants(Graph& g, std::size_t id) { return g.requires_grad(id); }

}  // namespace

Var matmul(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.cols() != bv.rows()) {
        throw DimensionError("matmul: shape mismatch " + shape_string(av.shape()) + " vs " +
                             shape_string(bv.shape()));
    }
    const std::size_t m = av.rows(), n = bv.cols();
    Tensor out = Tensor::zeros({m, n});
    as_matrix(out.data(), m, n).noalias() = as_matrix(av) * as_matrix(bv);
    return a.graph().record(OpKind::MatMul, std::move(out), {a.id(), b.id()},
                            [](Graph& g, std::size_t self) {
                                const auto& in = g.inputs(self);
                                const Tensor& av = g.value(in[0]);
                                const Tensor& bv = g.value(in[1]);
                                auto up = as_matrix(g.upstream(self), av.rows(), bv.cols());
                                if (wants(g, in[0])) {
                                    as_matrix(g.grad_buffer(in[0]), av.rows(), av.cols()).noalias() +=
                                        up * as_matrix(bv).transpose();
                                }
                                if (wants(g, in[1])) {
                                    as_matrix(g.grad_buffer(in[1]), bv.rows(), bv.cols()).noalias() +=
                                        as_matrix(av).transpose() * up;
                                }
                            });
}

Var matmul_nt(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.cols() != bv.cols()) {
        throw DimensionError("matmul_nt: shape mismatch " + shape_string(av.shape()) + " vs " +
                             shape_string(bv.shape()));
    }
    const std::size_t m = av.rows(), n = bv.rows();
    Tensor out = Tensor::zeros({m, n});
    as_matrix(out.data(), m, n).noalias() = as_matrix(av) * as_matrix(bv).transpose();
    return a.graph().record(OpKind::MatMulNT, std::move(out), {a.id(), b.id()},
                            [](Graph& g, std::size_t self) {
                                const auto& in = g.inputs(self);
                                const Tensor& av = g.value(in[0]);
                                const Tensor& bv = g.value(in[1]);
                                auto up = as_matrix(g.upstream(self), av.rows(), bv.rows());
                                if (wants(g, in[0])) {
                                    as_matrix(g.grad_buffer(in[0]), av.rows(), av.cols()).noalias() +=
                                        up * as_matrix(bv);
                                }
                                if (wants(g, in[1])) {
                                    as_matrix(g.grad_buffer(in[1]), bv.rows(), bv.cols()).noalias() +=
                                        up.transpose() * as_matrix(av);
                                }
                            });
}

Var add(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_same_shape("add", av, bv);
    Tensor out = av;
    out.requires_grad = false;
    out.grad.reset();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return a.graph().record(OpKind::Add, std::move(out), {a.id(), b.id()},
                            [](Graph& g, std::size_t self) {
                                auto up = g.upstream(self);
                                for (std::size_t in : g.inputs(self)) {
                                    if (!wants(g, in)) continue;
                                    auto gi = g.grad_buffer(in);
                                    for (std::size_t i = 0; i < up.size(); ++i) gi[i] += up[i];
                                }
                            });
}

Var add_row(Var a, Var row) {
    const Tensor& av = a.value();
    const Tensor& rv = row.value();
    if (rv.size() != av.cols()) {
        throw DimensionError("add_row: shape mismatch " + shape_string(av.shape()) + " vs " +
                             shape_string(rv.shape()));
    }
    Tensor out(av.shape(), std::vector<double>(av.data().begin(), av.data().end()));
    const std::size_t c = av.cols();
    for (std::size_t r = 0; r < av.rows(); ++r)
        for (std::size_t j = 0; j < c; ++j) out[r * c + j] += rv[j];
    return a.graph().record(OpKind::AddRow, std::move(out), {a.id(), row.id()},
                            [](Graph& g, std::size_t self) {
                                const auto& in = g.inputs(self);
                                auto up = g.upstream(self);
                                if (wants(g, in[0])) {
                                    auto ga = g.grad_buffer(in[0]);
                                    for (std::size_t i = 0; i < up.size(); ++i) ga[i] += up[i];
                                }
                                if (wants(g, in[1])) {
                                    auto gr = g.grad_buffer(in[1]);
                                    const std::size_t c = gr.size();
                                    for (std::size_t i = 0; i < up.size(); ++i) gr[i % c] += up[i];
                                }
                            });
}

Var mul(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_same_shape("mul", av, bv);
    Tensor out(av.shape(), std::vector<double>(av.size()));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return a.graph().record(OpKind::Mul, std::move(out), {a.id(), b.id()},
                            [](Graph& g, std::size_t self) {
                                const auto& in = g.inputs(self);
                                auto up = g.upstream(self);
                                const Tensor& av = g.value(in[0]);
                                const Tensor& bv = g.value(in[1]);
                                if (wants(g, in[0])) {
                                    auto ga = g.grad_buffer(in[0]);
                                    for (std::size_t i = 0; i < up.size(); ++i) ga[i] += up[i] * bv[i];
                                }
                                if (wants(g, in[1])) {
                                    auto gb = g.grad_buffer(in[1]);
                                    for (std::size_t i = 0; i < up.size(); ++i) gb[i] += up[i] * av[i];
                                }
                            });
}

Var scale(Var a, double s) {
    const Tensor& av = a.value();
    Tensor out(av.shape(), std::vector<double>(av.size()));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * s;
    return a.graph().record(OpKind::Scale, std::move(out), {a.id()},
                            [s](Graph& g, std::size_t self) {
                                auto up = g.upstream(self);
                                auto ga = g.grad_buffer(g.inputs(self)[0]);
                                for (std::size_t i = 0; i < up.size(); ++i) ga[i] += up[i] * s;
                            });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Var gelu(Var x) {
    const Tensor& xv = x.value();
    Tensor out(xv.shape(), std::vector<double>(xv.size()));
    for (std::size_t i = 0; i < xv.size(); ++i) {
        const double v = xv[i];
        out[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
    }
    return x.graph().record(OpKind::Gelu, std::move(out), {x.id()}, [](Graph& g, std::size_t self) {
        const std::size_t in = g.inputs(self)[0];
        const Tensor& xv = g.value(in);
        auto up = g.upstream(self);
        auto gx = g.grad_buffer(in);
        for (std::size_t i = 0; i < up.size(); ++i) {
            const double v = xv[i];
            const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
            const double d = 0.5 * (1.0 + t) +
                             0.5 * v * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
            gx[i] += up[i] * d;
        }
    });
}

Var softmax(Var x, bool causal) {
    const Tensor& xv = x.value();
    const std::size_t rows = xv.rows(), cols = xv.cols();
    Tensor out(xv.shape(), std::vector<double>(xv.size(), 0.0));
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t active = causal ? std::min(r + 1, cols) : cols;
        const double* in = xv.data().data() + r * cols;
        double* o = out.data().data() + r * cols;
        const double mx = *std::max_element(in, in + active);
        double total = 0.0;
        for (std::size_t j = 0; j < active; ++j) {
            o[j] = std::exp(in[j] - mx);
            total += o[j];
        }
        for (std::size_t j = 0; j < active; ++j) o[j] /= total;
    }
    return x.graph().record(OpKind::Softmax, std::move(out), {x.id()},
                            [causal](Graph& g, std::size_t self) {
                                const Tensor& y = g.value(self);
                                const std::size_t rows = y.rows(), cols = y.cols();
                                auto up = g.upstream(self);
                                auto gx = g.grad_buffer(g.inputs(self)[0]);
                                for (std::size_t r = 0; r < rows; ++r) {
                                    const std::size_t active = causal ? std::min(r + 1, cols) : cols;
                                    const std::size_t o = r * cols;
                                    double dot = 0.0;
                                    for (std::size_t j = 0; j < active; ++j) dot += y[o + j] * up[o + j];
                                    for (std::size_t j = 0; j < active; ++j)
                                        gx[o + j] += y[o + j] * (up[o + j] - dot);
                                }
                            });
}

namespace {
double stable_sigmoid(double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}

// −log sigmoid(v)
double softplus_neg(double v) {
    return v >= 0 ? std::log1p(std::exp(-v)) : -v + std::log1p(std::exp(v));
}
}  // namespace

Var sigmoid(Var x) {
    const Tensor& xv = x.value();
    Tensor out(xv.shape(), std::vector<double>(xv.size()));
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = stable_sigmoid(xv[i]);
    return x.graph().record(OpKind::Sigmoid, std::move(out), {x.id()},
                            [](Graph& g, std::size_t self) {
                                const Tensor& y = g.value(self);
                                auto up = g.upstream(self);
                                auto gx = g.grad_buffer(g.inputs(self)[0]);
                                for (std::size_t i = 0; i < up.size(); ++i)
                                    gx[i] += up[i] * y[i] * (1.0 - y[i]);
                            });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
    const Tensor& xv = x.value();
    const std::size_t rows = xv.rows(), d = xv.cols();
    if (gain.value().size() != d || bias.value().size() != d) {
        throw DimensionError("layer_norm: gain/bias " + shape_string(gain.value().shape()) + "/" +
                             shape_string(bias.value().shape()) + " vs input " +
                             shape_string(xv.shape()));
    }
    const Tensor& gv = gain.value();
    const Tensor& bv = bias.value();
    std::vector<double> xhat(xv.size());
    std::vector<double> inv_std(rows);
    Tensor out(xv.shape(), std::vector<double>(xv.size()));
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xv.data().data() + r * d;
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += in[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (in[j] - mean) * (in[j] - mean);
        var /= static_cast<double>(d);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            xhat[r * d + j] = (in[j] - mean) * inv_std[r];
            out[r * d + j] = gv[j] * xhat[r * d + j] + bv[j];
        }
    }
    return x.graph().record(
        OpKind::LayerNorm, std::move(out), {x.id(), gain.id(), bias.id()},
        [xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d](Graph& g, std::size_t self) {
            const auto& in = g.inputs(self);
            const Tensor& gv = g.value(in[1]);
            auto up = g.upstream(self);
            if (wants(g, in[1])) {
                auto gg = g.grad_buffer(in[1]);
                for (std::size_t i = 0; i < up.size(); ++i) gg[i % d] += up[i] * xhat[i];
            }
            if (wants(g, in[2])) {
                auto gb = g.grad_buffer(in[2]);
                for (std::size_t i = 0; i < up.size(); ++i) gb[i % d] += up[i];
            }
            if (wants(g, in[0])) {
                auto gx = g.grad_buffer(in[0]);
                const double dd = static_cast<double>(d);
                for (std::size_t r = 0; r < rows; ++r) {
                    double s1 = 0.0, s2 = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dxh = up[r * d + j] * gv[j];
                        s1 += dxh;
                        s2 += dxh * xhat[r * d + j];
                    }
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dxh = up[r * d + j] * gv[j];
                        gx[r * d + j] +=
                            inv_std[r] / dd * (dd * dxh - s1 - xhat[r * d + j] * s2);
                    }
                }
            }
        });
}

Var gather_rows(Var table, std::span<const std::size_t> indices) {
    const Tensor& tv = table.value();
    const std::size_t vocab = tv.rows(), d = tv.cols();
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    if (idx.empty()) throw ContractError("gather_rows: empty index list");
    Tensor out = Tensor::zeros({idx.size(), d});
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= vocab) {
            throw IndexError("embedding index " + std::to_string(idx[r]) +
                             " out of range for table with " + std::to_string(vocab) + " rows");
        }
        std::copy_n(tv.data().begin() + static_cast<std::ptrdiff_t>(idx[r] * d), d,
                    out.data().begin() + static_cast<std::ptrdiff_t>(r * d));
    }
    return table.graph().record(OpKind::GatherRows, std::move(out), {table.id()},
                                [idx = std::move(idx), d](Graph& g, std::size_t self) {
                                    auto up = g.upstream(self);
                                    auto gt = g.grad_buffer(g.inputs(self)[0]);
                                    for (std::size_t r = 0; r < idx.size(); ++r)
                                        for (std::size_t j = 0; j < d; ++j)
                                            gt[idx[r] * d + j] += up[r * d + j];
                                });
}

Var embedding_lookup(Var table, std::size_t index) {
    const std::size_t idx[1] = {index};
    Var rows = gather_rows(table, idx);
    return rows;
}

Var mean_pool_rows(Var table, const std::vector<std::vector<std::size_t>>& groups) {
    const Tensor& tv = table.value();
    const std::size_t vocab = tv.rows(), d = tv.cols();
    if (groups.empty()) throw ContractError("mean_pool_rows: no groups");
    Tensor out = Tensor::zeros({groups.size(), d});
    for (std::size_t r = 0; r < groups.size(); ++r) {
        if (groups[r].empty()) throw ContractError("mean_pool_rows: empty group at row " + std::to_string(r));
        const double w = 1.0 / static_cast<double>(groups[r].size());
        for (std::size_t i : groups[r]) {
            if (i >= vocab) {
                throw IndexError("embedding index " + std::to_string(i) +
                                 " out of range for table with " + std::to_string(vocab) + " rows");
            }
            for (std::size_t j = 0; j < d; ++j) out[r * d + j] += w * tv[i * d + j];
        }
    }
    return table.graph().record(OpKind::MeanPoolRows, std::move(out), {table.id()},
                                [groups, d](Graph& g, std::size_t self) {
                                    auto up = g.upstream(self);
                                    auto gt = g.grad_buffer(g.inputs(self)[0]);
                                    for (std::size_t r = 0; r < groups.size(); ++r) {
                                        const double w = 1.0 / static_cast<double>(groups[r].size());
                                        for (std::size_t i : groups[r])
                                            for (std::size_t j = 0; j < d; ++j)
                                                gt[i * d + j] += w * up[r * d + j];
                                    }
                                });
}

Var mean_rows(Var x) {
    const Tensor& xv = x.value();
    const std::size_t rows = xv.rows(), d = xv.cols();
    Tensor out = Tensor::zeros({1, d});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) out[j] += xv[r * d + j];
    for (std::size_t j = 0; j < d; ++j) out[j] /= static_cast<double>(rows);
    return x.graph().record(OpKind::MeanRows, std::move(out), {x.id()},
                            [rows, d](Graph& g, std::size_t self) {
                                auto up = g.upstream(self);
                                auto gx = g.grad_buffer(g.inputs(self)[0]);
                                const double w = 1.0 / static_cast<double>(rows);
                                for (std::size_t r = 0; r < rows; ++r)
                                    for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += w * up[j];
                            });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw ContractError("concat_cols: no inputs");
    const std::size_t rows = parts[0].rows();
    std::size_t total = 0;
    std::vector<std::size_t> ids, widths;
    for (const Var& p : parts) {
        if (p.rows() != rows) {
            throw DimensionError("concat_cols: row mismatch " + shape_string(parts[0].value().shape()) +
                                 " vs " + shape_string(p.value().shape()));
        }
        ids.push_back(p.id());
        widths.push_back(p.cols());
        total += p.cols();
    }
    Tensor out = Tensor::zeros({rows, total});
    std::size_t offset = 0;
    for (const Var& p : parts) {
        const Tensor& v = p.value();
        const std::size_t w = v.cols();
        for (std::size_t r = 0; r < rows; ++r)
            std::copy_n(v.data().begin() + static_cast<std::ptrdiff_t>(r * w), w,
                        out.data().begin() + static_cast<std::ptrdiff_t>(r * total + offset));
        offset += w;
    }
    return parts[0].graph().record(OpKind::ConcatCols, std::move(out), ids,
                                   [widths, rows, total](Graph& g, std::size_t self) {
                                       auto up = g.upstream(self);
                                       const auto& in = g.inputs(self);
                                       std::size_t offset = 0;
                                       for (std::size_t p = 0; p < in.size(); ++p) {
                                           const std::size_t w = widths[p];
                                           if (wants(g, in[p])) {
                                               auto gp = g.grad_buffer(in[p]);
                                               for (std::size_t r = 0; r < rows; ++r)
                                                   for (std::size_t j = 0; j < w; ++j)
                                                       gp[r * w + j] += up[r * total + offset + j];
                                           }
                                           offset += w;
                                       }
                                   });
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw ContractError("concat_rows: no inputs");
    const std::size_t cols = parts[0].cols();
    std::vector<std::size_t> ids;
    std::vector<double> data;
    for (const Var& p : parts) {
        if (p.cols() != cols) {
            throw DimensionError("concat_rows: column mismatch " +
                                 shape_string(parts[0].value().shape()) + " vs " +
                                 shape_string(p.value().shape()));
        }
        ids.push_back(p.id());
        data.insert(data.end(), p.value().data().begin(), p.value().data().end());
    }
    const std::size_t rows = data.size() / cols;
    return parts[0].graph().record(OpKind::ConcatRows, Tensor({rows, cols}, std::move(data)), ids,
                                   [](Graph& g, std::size_t self) {
                                       auto up = g.upstream(self);
                                       std::size_t offset = 0;
                                       for (std::size_t in : g.inputs(self)) {
                                           const std::size_t n = g.value(in).size();
                                           if (wants(g, in)) {
                                               auto gp = g.grad_buffer(in);
                                               for (std::size_t i = 0; i < n; ++i) gp[i] += up[offset + i];
                                           }
                                           offset += n;
                                       }
                                   });
}

Var slice_rows(Var x, std::size_t begin, std::size_t end) {
    const Tensor& xv = x.value();
    if (begin >= end || end > xv.rows()) {
        throw IndexError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for " + shape_string(xv.shape()));
    }
    const std::size_t d = xv.cols();
    std::vector<double> data(xv.data().begin() + static_cast<std::ptrdiff_t>(begin * d),
                             xv.data().begin() + static_cast<std::ptrdiff_t>(end * d));
    return x.graph().record(OpKind::SliceRows, Tensor({end - begin, d}, std::move(data)), {x.id()},
                            [begin, d](Graph& g, std::size_t self) {
                                auto up = g.upstream(self);
                                auto gx = g.grad_buffer(g.inputs(self)[0]);
                                for (std::size_t i = 0; i < up.size(); ++i) gx[begin * d + i] += up[i];
                            });
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
    const Tensor& xv = x.value();
    if (begin >= end || end > xv.cols()) {
        throw IndexError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for " + shape_string(xv.shape()));
    }
    const std::size_t rows = xv.rows(), d = xv.cols(), w = end - begin;
    Tensor out = Tensor::zeros({rows, w});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < w; ++j) out[r * w + j] = xv[r * d + begin + j];
    return x.graph().record(OpKind::SliceCols, std::move(out), {x.id()},
                            [begin, rows, d, w](Graph& g, std::size_t self) {
                                auto up = g.upstream(self);
                                auto gx = g.grad_buffer(g.inputs(self)[0]);
                                for (std::size_t r = 0; r < rows; ++r)
                                    for (std::size_t j = 0; j < w; ++j) gx[r * d + begin + j] += up[r * w + j];
                            });
}

Var scale_rows(Var x, Var w) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    if (wv.size() != xv.rows()) {
        throw DimensionError("scale_rows: weights " + shape_string(wv.shape()) + " vs input " +
                             shape_string(xv.shape()));
    }
    const std::size_t rows = xv.rows(), d = xv.cols();
    Tensor out(xv.shape(), std::vector<double>(xv.size()));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] = xv[r * d + j] * wv[r];
    return x.graph().record(OpKind::ScaleRows, std::move(out), {x.id(), w.id()},
                            [rows, d](Graph& g, std::size_t self) {
                                const auto& in = g.inputs(self);
                                const Tensor& xv = g.value(in[0]);
                                const Tensor& wv = g.value(in[1]);
                                auto up = g.upstream(self);
                                if (wants(g, in[0])) {
                                    auto gx = g.grad_buffer(in[0]);
                                    for (std::size_t r = 0; r < rows; ++r)
                                        for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += up[r * d + j] * wv[r];
                                }
                                if (wants(g, in[1])) {
                                    auto gw = g.grad_buffer(in[1]);
                                    for (std::size_t r = 0; r < rows; ++r) {
                                        double acc = 0.0;
                                        for (std::size_t j = 0; j < d; ++j) acc += up[r * d + j] * xv[r * d + j];
                                        gw[r] += acc;
                                    }
                                }
                            });
}

Var sum(Var x) {
    const Tensor& xv = x.value();
    double total = 0.0;
    for (double v : xv.data()) total += v;
    return x.graph().record(OpKind::Sum, Tensor::scalar(total), {x.id()}, [](Graph& g, std::size_t self) {
        const double up = g.upstream(self)[0];
        auto gx = g.grad_buffer(g.inputs(self)[0]);
        for (double& v : gx) v += up;
    });
}

Var weighted_cross_entropy(Var logits, std::span<const int> targets, std::span<const double> weights) {
    const Tensor& lv = logits.value();
    const std::size_t rows = lv.rows(), c = lv.cols();
    if (targets.size() != rows || weights.size() != rows) {
        throw DimensionError("weighted_cross_entropy: " + std::to_string(targets.size()) + " targets, " +
                             std::to_string(weights.size()) + " weights for logits " +
                             shape_string(lv.shape()));
    }
    std::vector<int> t(targets.begin(), targets.end());
    std::vector<double> w(weights.begin(), weights.end());
    std::vector<double> probs(lv.size(), 0.0);
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (t[r] < 0) continue;
        if (static_cast<std::size_t>(t[r]) >= c) {
            throw IndexError("target " + std::to_string(t[r]) + " out of range for " +
                             std::to_string(c) + " classes");
        }
        const double* x = lv.data().data() + r * c;
        const double mx = *std::max_element(x, x + c);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            probs[r * c + j] = std::exp(x[j] - mx);
            z += probs[r * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) probs[r * c + j] /= z;
        total += w[r] * (mx + std::log(z) - x[t[r]]);
    }
    return logits.graph().record(
        OpKind::CrossEntropy, Tensor::scalar(total), {logits.id()},
        [t = std::move(t), w = std::move(w), probs = std::move(probs), c](Graph& g, std::size_t self) {
            const double up = g.upstream(self)[0];
            auto gl = g.grad_buffer(g.inputs(self)[0]);
            for (std::size_t r = 0; r < t.size(); ++r) {
                if (t[r] < 0) continue;
                const double s = up * w[r];
                for (std::size_t j = 0; j < c; ++j) gl[r * c + j] += s * probs[r * c + j];
                gl[r * c + static_cast<std::size_t>(t[r])] -= s;
            }
        });
}

Var weighted_positive_bce(Var logits, const std::vector<std::vector<int>>& positives,
                          std::span<const double> weights) {
    const Tensor& lv = logits.value();
    const std::size_t rows = lv.rows(), c = lv.cols();
    if (positives.size() != rows || weights.size() != rows) {
        throw DimensionError("weighted_positive_bce: " + std::to_string(positives.size()) +
                             " label sets, " + std::to_string(weights.size()) + " weights for logits " +
                             shape_string(lv.shape()));
    }
    std::vector<double> w(weights.begin(), weights.end());
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        for (int j : positives[r]) {
            if (j < 0 || static_cast<std::size_t>(j) >= c) {
                throw IndexError("positive label " + std::to_string(j) + " out of range for " +
                                 std::to_string(c) + " classes");
            }
            total += w[r] * softplus_neg(lv[r * c + static_cast<std::size_t>(j)]);
        }
    }
    return logits.graph().record(OpKind::PositiveBce, Tensor::scalar(total), {logits.id()},
                                 [positives, w = std::move(w), c](Graph& g, std::size_t self) {
                                     const std::size_t in = g.inputs(self)[0];
                                     const Tensor& lv = g.value(in);
                                     const double up = g.upstream(self)[0];
                                     auto gl = g.grad_buffer(in);
                                     for (std::size_t r = 0; r < positives.size(); ++r)
                                         for (int j : positives[r]) {
                                             const std::size_t k = r * c + static_cast<std::size_t>(j);
                                             gl[k] += up * w[r] * (stable_sigmoid(lv[k]) - 1.0);
                                         }
                                 });
}

Var scaled_dot_attention(Var q, Var k, Var v, bool causal) {
    const Tensor& qv = q.value();
    if (k.rows() != qv.rows() || v.rows() != qv.rows() || k.cols() != qv.cols()) {
        throw DimensionError("scaled_dot_attention: Q " + shape_string(qv.shape()) + ", K " +
                             shape_string(k.value().shape()) + ", V " + shape_string(v.value().shape()));
    }
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(qv.cols()));
    Var weights = softmax(scale(matmul_nt(q, k), inv_sqrt_d), causal);
    return matmul(weights, v);
}

// ---- validation --------------------------------------------------------------

double grad_check(const LossBuilder& build, ParameterSet& params, double eps) {
    params.zero_grad();
    {
        Graph g;
        Var loss = build(g);
        g.backward(loss);
    }
    auto evaluate = [&] {
        Graph g;
        return build(g).value().item();
    };
    double worst = 0.0;
    for (auto& p : params) {
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double orig = p->value[i];
            p->value[i] = orig + eps;
            const double plus = evaluate();
            p->value[i] = orig - eps;
            const double minus = evaluate();
            p->value[i] = orig;
            const double numeric = (plus - minus) / (2.0 * eps);
            const double analytic = p->grad[i];
            const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
            worst = std::max(worst, std::abs(analytic - numeric) / denom);
        }
    }
    return worst;
}

Tensor xavier_uniform(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    std::vector<double> data(rows * cols);
    for (double& v : data) v = dist(rng);
    return Tensor({rows, cols}, std::move(data));
}

}  // namespace intentrec
