#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ratlab/tensor.hpp"

namespace ratlab::ad {

class Graph;

// Handle to a value recorded on a Graph. Cheap to copy; only valid while the
// owning Graph is alive.
class Var {
public:
    Var() = default;
    Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    std::size_t size() const { return value().size(); }
    Graph& graph() const { return *graph_; }
    std::size_t id() const { return id_; }
    bool valid() const { return graph_ != nullptr; }

private:
    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
};

// Reverse-mode tape. Nodes are appended in evaluation order, so reverse index
// order is a topological order and each node is visited once per backward pass.
// One Graph per thread; build a fresh one per training step.
class Graph {
public:
    using Backward = std::function<void(Graph&, const Tensor& out_grad)>;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var leaf(Tensor value);
    Var constant(Tensor value);
    // Same value, no gradient path back to v.
    Var detach(Var v);

    // Gradients of scalar `loss` with respect to each leaf (zeros when unreachable).
    std::vector<Tensor> grad(Var loss, std::span<const Var> leaves);
    Tensor grad(Var loss, Var leaf);

    // Op-author interface.
    Var record(std::string_view op, Tensor value, std::span<const Var> inputs, Backward backward);
    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
    void accumulate(Var v, const Tensor& g);
    void accumulate(Var v, std::span<const double> g);
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        bool requires_grad = false;
        bool is_leaf = false;
        Backward backward;
        Tensor grad;
        bool has_grad = false;
    };
    void check_owned(Var v, const char* what) const;

    std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return graph_->value(id_); }

// Elementwise arithmetic; shapes must match or one side must hold a single value.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var neg(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator*(Var a, double s) { return scale(a, s); }
inline Var operator*(double s, Var a) { return scale(a, s); }
inline Var operator+(Var a, double s) { return add_scalar(a, s); }
inline Var operator-(Var a) { return neg(a); }

Var matmul(Var a, Var b);
// a: m x n, bias: n; adds bias to each row.
Var add_bias(Var a, Var bias);
Var relu(Var x);
Var exp(Var x);
Var log(Var x);
Var square(Var x);
Var sum(Var x);
Var mean(Var x);
Var reshape(Var x, Shape shape);

// Row-wise log-softmax of a batch x K matrix, computed with max subtraction.
Var log_softmax(Var logits);
// Mean over rows of sum_k exp(p)(p - q). With stop_gradient_p the first
// argument is a constant for the backward pass.
Var kl_categorical(Var p_log, Var q_log, bool stop_gradient_p = true);
// Mean over rows of -sum_k exp(l) l.
Var entropy(Var log_probs);
// Mean over all rows of -w_i * log_probs[i, labels[i]]; weights default to 1.
Var nll(Var log_probs, std::span<const int> labels, std::span<const double> weights = {});

}  // namespace ratlab::ad
