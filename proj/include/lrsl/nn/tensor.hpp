#pragma once

#include "lrsl/linalg/matrix.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace lrsl::nn {

using linalg::Matrix;

namespace detail {

struct Node {
    Matrix value;
    Matrix grad; // allocated on first accumulation
    bool requires_grad = false;
    std::uint64_t id = 0;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;
    void accumulate(const Matrix& g);
};

} // namespace detail

/// Handle to a value in a reverse-mode graph.
///
/// Leaves are either trainable parameters or constants. Interior tensors are
/// produced by the ops in ops.hpp and keep their parents alive until released.
class Tensor {
public:
    Tensor() = default;

    static Tensor parameter(Matrix value);
    static Tensor constant(Matrix value);

    bool defined() const noexcept { return node_ != nullptr; }
    const Matrix& value() const { return node_->value; }
    /// Direct write access for optimizers and checkpoint loading.
    Matrix& mutable_value() { return node_->value; }
    std::size_t rows() const { return node_->value.rows(); }
    std::size_t cols() const { return node_->value.cols(); }

    bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
    /// Toggling off also discards any accumulated gradient.
    void set_requires_grad(bool on);

    bool has_grad() const noexcept { return node_ && !node_->grad.empty(); }
    /// Accumulated gradient, or a zero matrix of the value's shape if none.
    Matrix grad() const;
    void zero_grad();

    std::uint64_t id() const noexcept { return node_ ? node_->id : 0; }
    double item() const;

    /// Fresh leaf that shares no graph history with this tensor.
    Tensor detach() const;

    detail::Node* node() const noexcept { return node_.get(); }
    const std::shared_ptr<detail::Node>& shared() const noexcept { return node_; }

    static Tensor from_op(Matrix value, std::vector<Tensor> parents, std::function<void(detail::Node&)> backward);

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;
};

/// Reverse sweep from a 1x1 loss. Gradients accumulate into every
/// requires_grad leaf reachable from `loss`.
void backward(const Tensor& loss);

} // namespace lrsl::nn
