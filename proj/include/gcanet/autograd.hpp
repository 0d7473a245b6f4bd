#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gcanet/tensor.hpp"

namespace gcanet {

// One node of the dynamic tape. The graph built during a forward pass is
// the tape; backward() walks it once in reverse topological order and then
// drops the closures, so a node cannot be differentiated twice.
struct Node {
    Tensor value;
    Tensor grad;  // allocated on demand, same shape as value
    bool requires_grad = false;
    bool grad_live = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;
    std::string name;

    void ensure_grad() {
        if (!grad_live) {
            grad = Tensor(value.shape());
            grad_live = true;
        }
    }
    void zero_grad() {
        grad = Tensor(value.shape());
        grad_live = true;
    }
};

using Var = std::shared_ptr<Node>;

// Leaf holding a value; requires_grad marks it as a differentiation target.
Var leaf(Tensor value, bool requires_grad = false, std::string name = "");

// Interior node; requires_grad is inherited from the parents.
Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn);

// Reverse-mode sweep from a scalar loss. Accumulates into the grads of all
// reachable requires_grad nodes. Throws if loss is not a single element or
// if the sub-tape below it was already consumed by a previous backward().
void backward(const Var& loss);

// A named trainable tensor. grad lives in the underlying node and persists
// across steps until zeroed.
struct Parameter {
    Var var;
    bool trainable = true;

    Parameter() = default;
    Parameter(Tensor value, std::string name, bool trainable = true)
        : var(leaf(std::move(value), true, std::move(name))), trainable(trainable) {
        var->zero_grad();
    }
    const std::string& name() const { return var->name; }
    Tensor& value() { return var->value; }
    const Tensor& value() const { return var->value; }
    Tensor& grad() { return var->grad; }
};

// ---- elementwise / reduction / shape ops ----

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var relu(const Var& a);
// mean of squared entries, reduced to a (1,1,1,1) scalar
Var mean_square(const Var& a);
// plain sum of all entries, reduced to a (1,1,1,1) scalar
Var sum_all(const Var& a);
Var concat_channels(const std::vector<Var>& parts);
// channels [c0, c1)
Var slice_channels(const Var& a, int64_t c0, int64_t c1);
// gate: (n,1,h,w), x: (n,c,h,w); per-pixel scalar broadcast over channels
Var mul_gate(const Var& gate, const Var& x);

}  // namespace gcanet
