#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "picg/tensor.hpp"

namespace picg {

struct Node;
using Var = std::shared_ptr<Node>;

// Gradients of shared parameter nodes are accumulated here instead of inside
// the node, so several sample graphs can run backward concurrently against
// the same parameters (each with its own map, reduced in fixed order).
using GradMap = std::unordered_map<const Node*, Tensor>;

using GradBufferFn = std::function<Tensor&(Node*)>;

// One vertex of a dynamically built computation graph. Graphs are built
// fresh per forward pass; parameters are long-lived leaf nodes.
struct Node {
    Tensor value;
    Tensor grad;  // scratch for non-parameter nodes during backward
    bool requires_grad = false;
    bool is_param = false;
    std::vector<Var> parents;
    // Reads this->grad and accumulates into parent buffers via the callback.
    std::function<void(Node&, const GradBufferFn&)> backward_fn;
};

inline Var make_constant(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return n;
}

inline Var make_param(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    n->is_param = true;
    return n;
}

inline Var make_op(Tensor value, std::vector<Var> parents,
                   std::function<void(Node&, const GradBufferFn&)> backward) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) n->backward_fn = std::move(backward);
    return n;
}

// Reverse-mode sweep from a scalar loss. Parameter gradients land in
// `param_grads` keyed by node; intermediate gradients live on the nodes.
void backward(const Var& loss, GradMap& param_grads);

// Insertion-ordered named parameter registry for a model. The order defines
// the checkpoint blob layout and every deterministic reduction over params.
class ParamStore {
  public:
    Var add(const std::string& name, Tensor init);
    Var find(const std::string& name) const;
    bool contains(const std::string& name) const;

    const std::vector<std::pair<std::string, Var>>& items() const { return items_; }

    // Flips requires_grad per parameter name; returns trainable count.
    int set_trainable(const std::function<bool(const std::string&)>& pred);

    std::vector<std::pair<std::string, Var>> trainable() const;

    int64_t total_params() const;

    // Digest over raw double bytes of parameters selected by `pred`
    // (nullptr selects all). Bit-identical iff the values are.
    uint64_t digest(const std::function<bool(const std::string&)>& pred = nullptr) const;

  private:
    std::vector<std::pair<std::string, Var>> items_;
    std::unordered_map<std::string, size_t> index_;
};

}  // namespace picg
