#pragma once

#include "lrsl/nn/transformer.hpp"

#include <functional>
#include <span>
#include <string>

namespace lrsl::nn {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_parameter;
    std::size_t coords_checked = 0;
};

/// Compares reverse-mode gradients of `loss_fn` against central differences
/// on up to `coords_per_param` sampled coordinates of every parameter.
/// Relative error is |fd - ad| / max(|fd|, |ad|, 1e-12).
GradCheckResult gradient_check(std::span<const NamedTensor> params, const std::function<Tensor()>& loss_fn,
                               std::size_t coords_per_param, double h, std::uint64_t seed = 0);

/// Eval-mode cross entropy of `model` on (tokens, targets), checked over
/// every trainable parameter.
GradCheckResult gradient_check(const Model& model, std::span<const int> tokens, std::span<const int> targets,
                               std::size_t coords_per_param, double h, std::uint64_t seed = 0);

} // namespace lrsl::nn
