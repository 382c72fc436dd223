#include "carc/tensor.hpp"

#include <algorithm>
#include <unordered_set>

namespace carc {

std::string shape_str(const std::vector<int>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

void check_shape_dims(const std::vector<int>& shape) {
    if (shape.empty()) throw ShapeError("tensor shape must have at least one dim");
    for (int d : shape) {
        if (d < 1) throw ShapeError("tensor dims must be >= 1, got " + shape_str(shape));
    }
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    check_shape_dims(shape);
    auto node = std::make_shared<TensorNode>();
    node->data.assign(static_cast<size_t>(shape_numel(shape)), 0.0f);
    node->shape = std::move(shape);
    Tensor t(std::move(node));
    if (requires_grad) t.set_requires_grad(true);
    return t;
}

Tensor Tensor::full(std::vector<int> shape, float value) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.vec().begin(), t.vec().end(), value);
    return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<float> data) {
    check_shape_dims(shape);
    if (static_cast<int64_t>(data.size()) != shape_numel(shape)) {
        throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
    }
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    return Tensor(std::move(node));
}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, float stddev) {
    Tensor t = zeros(std::move(shape));
    for (auto& x : t.vec()) x = static_cast<float>(rng.next_normal() * stddev);
    return t;
}

void Tensor::set_requires_grad(bool on) {
    node_->requires_grad = on;
    if (on) {
        node_->grad.assign(node_->data.size(), 0.0f);
    } else {
        node_->grad.clear();
    }
}

void Tensor::zero_grad() {
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
}

float Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() requires a scalar, shape is " + shape_str(shape()));
    return node_->data[0];
}

Tensor Tensor::make_op(std::vector<int> shape, std::vector<Tensor> parents) {
    bool needs_grad = false;
    for (const auto& p : parents) needs_grad = needs_grad || p.requires_grad();
    Tensor out = zeros(std::move(shape), needs_grad);
    if (needs_grad) out.node_->parents = std::move(parents);
    return out;
}

void Tensor::backward() {
    if (numel() != 1) throw ShapeError("backward() requires a scalar root, shape is " + shape_str(shape()));
    if (!node_->requires_grad) return;

    // Iterative post-order DFS.
    std::vector<TensorNode*> topo;
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            TensorNode* child = n->parents[idx].node();
            ++idx;
            if (child->requires_grad && visited.insert(child).second) {
                stack.emplace_back(child, 0);
            }
        } else {
            topo.push_back(n);
            stack.pop_back();
        }
    }

    node_->grad[0] = 1.0f;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn();
    }
}

}  // namespace carc
