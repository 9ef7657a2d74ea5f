#pragma once

#include "lrsl/analysis/similarity.hpp"

#include <span>
#include <vector>

namespace lrsl::analysis {

struct ForgettingResult {
    double loss = 0.0;         // mean over positions of -sum_v p_base(v) log p_ft(v)
    double base_entropy = 0.0; // mean over positions of -sum_v p_base(v) log p_base(v)
    std::size_t positions = 0;
};

/// Row-wise cross-entropy of the finetuned distribution against the base
/// distribution, both given as logits of the same shape.
ForgettingResult forgetting_from_logits(const Matrix& base_logits, const Matrix& finetuned_logits);

/// Forgetting loss over every position of every corpus sequence. Both
/// quantities come from the same pass, so finetuned == base gives
/// loss == base_entropy exactly. Throws StructureMismatchError on vocab
/// mismatch and std::invalid_argument on an empty corpus.
ForgettingResult forgetting_loss(const nn::Model& base, const nn::Model& finetuned,
                                 std::span<const std::vector<int>> corpus);

} // namespace lrsl::analysis
