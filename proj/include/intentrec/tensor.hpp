#pragma once

// Dense f64 tensors with a tape-based reverse-mode autodiff engine.
//
// Every op treats its operands as matrices: the last dimension is the column
// count and all leading dimensions fold into rows. A 1-D tensor of length d is
// a 1 x d row. Shapes are never broadcast except for the row-vector bias in
// add_row().
//
//   ParameterSet params;
//   Parameter& w = params.add("w", Tensor::zeros({3, 2}));
//   Graph g;
//   Var loss = sum(matmul(g.input(x), g.param(w)));
//   g.backward(loss);          // w.grad now holds d loss / d w

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace intentrec {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

class Tensor {
   public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape);
    static Tensor filled(Shape shape, double value);
    static Tensor scalar(double value);
    // Row-major 2-D literal: Tensor::matrix({{1, 2}, {3, 4}}).
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor row(std::initializer_list<double> values);
    static Tensor row(std::vector<double> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t cols() const noexcept { return shape_.empty() ? 1 : shape_.back(); }
    std::size_t rows() const noexcept { return cols() == 0 ? 0 : size() / cols(); }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }
    std::vector<double>& storage() noexcept { return data_; }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double item() const;

    bool all_finite() const noexcept;
    // Shape and values only.
    bool operator==(const Tensor& other) const { return shape_ == other.shape_ && data_ == other.data_; }

    bool requires_grad = false;
    std::optional<std::vector<double>> grad;

   private:
    Shape shape_{};
    std::vector<double> data_{};
};

// A named trainable tensor. Its grad buffer accumulates across backward passes
// until zero_grad().
struct Parameter {
    std::string name;
    Tensor value;
    std::vector<double> grad;
    std::size_t index = 0;

    void zero_grad();
};

class ParameterSet {
   public:
    ParameterSet() = default;
    ParameterSet(const ParameterSet&) = delete;
    ParameterSet& operator=(const ParameterSet&) = delete;
    ParameterSet(ParameterSet&&) = default;
    ParameterSet& operator=(ParameterSet&&) = default;

    Parameter& add(const std::string& name, Tensor init);
    Parameter& at(const std::string& name);
    const Parameter& at(const std::string& name) const;
    bool contains(const std::string& name) const;

    std::size_t size() const noexcept { return params_.size(); }
    std::size_t scalar_count() const noexcept;
    Parameter& operator[](std::size_t i) { return *params_[i]; }
    const Parameter& operator[](std::size_t i) const { return *params_[i]; }

    void zero_grad();

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.cbegin(); }
    auto end() const { return params_.cend(); }

   private:
    std::vector<std::unique_ptr<Parameter>> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Per-thread gradient accumulator used when several graphs run concurrently
// against one ParameterSet. Indexed by Parameter::index.
class GradientBuffer {
   public:
    explicit GradientBuffer(const ParameterSet& params);
    std::vector<double>& for_param(const Parameter& p);
    // Adds every buffer into the parameters' own grads.
    void flush_into(ParameterSet& params) const;

   private:
    std::vector<std::vector<double>> grads_;
    std::vector<std::size_t> sizes_;
};

enum class OpKind {
    Input,
    Param,
    Constant,
    MatMul,
    MatMulNT,
    Add,
    AddRow,
    Mul,
    Scale,
    Gelu,
    Softmax,
    Sigmoid,
    LayerNorm,
    GatherRows,
    MeanPoolRows,
    MeanRows,
    ConcatCols,
    ConcatRows,
    SliceRows,
    SliceCols,
    ScaleRows,
    Sum,
    CrossEntropy,
    PositiveBce,
};

const char* op_name(OpKind kind);

class Graph;

// Handle to a node in a Graph. Cheap to copy; valid while the graph lives.
class Var {
   public:
    Var() = default;
    Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

    Graph& graph() const { return *graph_; }
    std::size_t id() const noexcept { return id_; }
    const Tensor& value() const;
    std::span<const double> grad() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    bool valid() const noexcept { return graph_ != nullptr; }

   private:
    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
};

class Graph {
   public:
    using BackwardFn = std::function<void(Graph&, std::size_t node)>;

    // With a sink, parameter gradients land in the sink instead of Parameter::grad.
    explicit Graph(GradientBuffer* sink = nullptr) : sink_(sink) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var input(Tensor value, bool requires_grad = true);
    Var constant(Tensor value);
    Var param(Parameter& p);

    // Reverse sweep from a scalar. Parameter grads accumulate; intermediate
    // grads are reset first so repeated calls are idempotent on them.
    void backward(Var loss);

    const Tensor& value(std::size_t id) const;
    std::span<const double> grad(std::size_t id) const;
    OpKind kind(std::size_t id) const { return nodes_[id].kind; }
    const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

    // Used by op implementations.
    Var record(OpKind kind, Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);
    std::span<double> grad_buffer(std::size_t id);
    std::span<const double> upstream(std::size_t id) const { return *nodes_[id].grad; }

   private:
    struct Node {
        OpKind kind = OpKind::Input;
        Tensor own;
        Parameter* param = nullptr;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        bool requires_grad = false;
        std::vector<double> own_grad;
        std::vector<double>* grad = nullptr;
    };

    Node& push(Node node);

    std::deque<Node> nodes_;
    std::unordered_map<const Parameter*, std::size_t> bound_params_;
    GradientBuffer* sink_;
};

// ---- ops -------------------------------------------------------------------

Var matmul(Var a, Var b);
// a · bᵀ
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
// Adds a 1 x n row to every row of a.
Var add_row(Var a, Var row);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var gelu(Var x);
// Row-wise softmax with max subtraction. With causal set, row i only covers
// columns 0..i; masked entries are exactly zero.
Var softmax(Var x, bool causal = false);
Var sigmoid(Var x);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var embedding_lookup(Var table, std::size_t index);
Var gather_rows(Var table, std::span<const std::size_t> indices);
// Output row r is the mean of table rows groups[r]; every group non-empty.
Var mean_pool_rows(Var table, const std::vector<std::vector<std::size_t>>& groups);
Var mean_rows(Var x);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var x, std::size_t begin, std::size_t end);
Var slice_cols(Var x, std::size_t begin, std::size_t end);
// Multiplies row r of x by w[r]; w is rows x 1.
Var scale_rows(Var x, Var w);
Var sum(Var x);
// Σ_r weights[r] · −log softmax(logits_r)[targets[r]], skipping rows whose
// target is negative.
Var weighted_cross_entropy(Var logits, std::span<const int> targets,
                           std::span<const double> weights);
// Σ_r weights[r] · Σ_{j ∈ positives[r]} −log sigmoid(logits_r[j]). Rows with
// an empty positive list are skipped.
Var weighted_positive_bce(Var logits, const std::vector<std::vector<int>>& positives,
                          std::span<const double> weights);
Var scaled_dot_attention(Var q, Var k, Var v, bool causal);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

// ---- validation harness ------------------------------------------------------

using LossBuilder = std::function<Var(Graph&)>;

// Central-difference check of every entry of every parameter. Returns
// max |a − n| / max(1, |a|, |n|).
double grad_check(const LossBuilder& build, ParameterSet& params, double eps = 1e-5);

// Xavier-uniform fill from the given engine.
Tensor xavier_uniform(std::size_t rows, std::size_t cols, std::mt19937_64& rng);

}  // namespace intentrec
