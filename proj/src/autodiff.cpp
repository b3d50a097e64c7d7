#include "picg/autodiff.hpp"

#include <unordered_set>

namespace picg {

void backward(const Var& loss, GradMap& param_grads) {
    if (loss->value.numel() != 1) throw shape_error("backward expects a scalar loss");
    if (!loss->requires_grad) return;

    // Iterative post-order DFS. The visit order is fixed by graph structure
    // (parents vectors), so the sweep is deterministic.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    visited.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && !visited.count(parent)) {
                visited.insert(parent);
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    auto buffer_of = [&param_grads](Node* n) -> Tensor& {
        if (n->is_param) {
            Tensor& g = param_grads[n];
            if (g.empty()) g = Tensor(n->value.shape());
            return g;
        }
        if (n->grad.empty()) n->grad = Tensor(n->value.shape());
        return n->grad;
    };

    loss->grad = Tensor(loss->value.shape());
    loss->grad[0] = 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (!node->backward_fn) continue;
        if (node->grad.empty()) continue;  // nothing flowed into this node
        node->backward_fn(*node, buffer_of);
        node->grad = Tensor();  // free as soon as consumed
    }
}

Var ParamStore::add(const std::string& name, Tensor init) {
    if (index_.count(name)) throw state_error("duplicate parameter name: " + name);
    Var v = make_param(std::move(init));
    index_[name] = items_.size();
    items_.emplace_back(name, v);
    return v;
}

Var ParamStore::find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw state_error("unknown parameter: " + name);
    return items_[it->second].second;
}

bool ParamStore::contains(const std::string& name) const { return index_.count(name) > 0; }

int ParamStore::set_trainable(const std::function<bool(const std::string&)>& pred) {
    int n = 0;
    for (auto& [name, var] : items_) {
        var->requires_grad = pred(name);
        if (var->requires_grad) ++n;
    }
    return n;
}

std::vector<std::pair<std::string, Var>> ParamStore::trainable() const {
    std::vector<std::pair<std::string, Var>> out;
    for (const auto& item : items_)
        if (item.second->requires_grad) out.push_back(item);
    return out;
}

int64_t ParamStore::total_params() const {
    int64_t n = 0;
    for (const auto& [name, var] : items_) n += var->value.numel();
    return n;
}

uint64_t ParamStore::digest(const std::function<bool(const std::string&)>& pred) const {
    Fnv1a64 h;
    for (const auto& [name, var] : items_) {
        if (pred && !pred(name)) continue;
        h.update(name);
        h.update(var->value.data(), size_t(var->value.numel()) * sizeof(double));
    }
    return h.value();
}

}  // namespace picg
