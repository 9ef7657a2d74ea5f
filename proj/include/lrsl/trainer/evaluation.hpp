#pragma once

#include "lrsl/trainer/tasks.hpp"

#include <span>
#include <vector>

namespace lrsl::trainer {

/// Greedily decodes answer_length tokens after `prompt`; ties in the argmax
/// go to the lowest token id.
std::vector<int> greedy_decode(const nn::Model& model, std::span<const int> prompt, std::size_t answer_length);

/// Fraction of predictions equal to their reference. Throws
/// std::invalid_argument on empty or mismatched inputs.
double exact_match(const std::vector<std::vector<int>>& predictions, const std::vector<std::vector<int>>& references);

/// Exact-match ratio of greedy decoding over `examples`.
double evaluate_exact_match(const nn::Model& model, std::span<const Example> examples);

} // namespace lrsl::trainer
