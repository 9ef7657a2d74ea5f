#pragma once

#include "lrsl/nn/transformer.hpp"

#include <vector>

namespace lrsl::trainer {

using linalg::Matrix;


struct AdamWOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

/// One bias-corrected AdamW update of `param` in place. `step` counts from 1.
/// Throws DimensionError on shape disagreement.
void adamw_update(Matrix& param, const Matrix& grad, Matrix& first_moment, Matrix& second_moment, std::size_t step,
                  double lr, const AdamWOptions& options);

/// AdamW over a fixed set of trainable tensors.
class AdamW {
public:
    AdamW(std::vector<nn::NamedTensor> params, AdamWOptions options);

    /// Applies one update with the given learning rate using the gradients
    /// currently held by the tensors. Throws NonFiniteError naming the first
    /// parameter whose gradient is not finite; nothing is updated in that case.
    void step(double lr);

    std::size_t steps_taken() const noexcept { return steps_; }
    const std::vector<nn::NamedTensor>& params() const noexcept { return params_; }

private:
    std::vector<nn::NamedTensor> params_;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
    AdamWOptions options_;
    std::size_t steps_ = 0;
};

} // namespace lrsl::trainer
