#include "lrsl/nn/tensor.hpp"

#include <atomic>
#include <stdexcept>
#include <unordered_set>

namespace lrsl::nn {

namespace {
std::atomic<std::uint64_t> next_id{1};
}

void detail::Node::accumulate(const Matrix& g) {
    if (!requires_grad) {
        return;
    }
    if (grad.empty()) {
        grad = g;
    } else {
        grad += g;
    }
}

Tensor Tensor::parameter(Matrix value) {
    auto node = std::make_shared<detail::Node>();
    node->value = std::move(value);
    node->requires_grad = true;
    node->id = next_id.fetch_add(1, std::memory_order_relaxed);
    return Tensor(std::move(node));
}

Tensor Tensor::constant(Matrix value) {
    auto node = std::make_shared<detail::Node>();
    node->value = std::move(value);
    node->id = next_id.fetch_add(1, std::memory_order_relaxed);
    return Tensor(std::move(node));
}

Tensor Tensor::from_op(Matrix value, std::vector<Tensor> parents, std::function<void(detail::Node&)> backward) {
    auto node = std::make_shared<detail::Node>();
    node->value = std::move(value);
    node->id = next_id.fetch_add(1, std::memory_order_relaxed);
    for (auto& p : parents) {
        node->requires_grad = node->requires_grad || p.requires_grad();
    }
    if (node->requires_grad) {
        node->parents.reserve(parents.size());
        for (auto& p : parents) {
            node->parents.push_back(p.node_);
        }
        node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
}

void Tensor::set_requires_grad(bool on) {
    node_->requires_grad = on;
    if (!on) {
        node_->grad = Matrix();
    }
}

Matrix Tensor::grad() const {
    if (node_->grad.empty()) {
        return Matrix(node_->value.rows(), node_->value.cols());
    }
    return node_->grad;
}

void Tensor::zero_grad() { node_->grad = Matrix(); }

double Tensor::item() const {
    if (node_->value.rows() != 1 || node_->value.cols() != 1) {
        throw DimensionError("Tensor::item: tensor is " + node_->value.shape_string() + ", not 1x1");
    }
    return node_->value(0, 0);
}

Tensor Tensor::detach() const { return constant(node_->value); }

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.rows() != 1 || loss.cols() != 1) {
        throw DimensionError("backward: loss must be a 1x1 tensor, got " +
                             (loss.defined() ? loss.value().shape_string() : std::string("undefined")));
    }
    if (!loss.requires_grad()) {
        return;
    }
    if (!loss.node()->backward) {
        loss.node()->accumulate(Matrix(1, 1, 1.0));
        return;
    }

    // Iterative post-order DFS gives a topological order.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(loss.node(), 0);
    seen.insert(loss.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::Node* parent = node->parents[next++].get();
            if (parent->requires_grad && seen.insert(parent).second) {
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    // Interior gradients are scratch space; leaves keep accumulating.
    for (auto* node : order) {
        if (node->backward) {
            node->grad = Matrix();
        }
    }
    loss.node()->grad = Matrix(1, 1, 1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* node = *it;
        if (node->backward && !node->grad.empty()) {
            node->backward(*node);
            node->grad = Matrix();
        }
    }
}

} // namespace lrsl::nn
