#include "lrsl/trainer/evaluation.hpp"

#include <stdexcept>

namespace lrsl::trainer {

std::vector<int> greedy_decode(const nn::Model& model, std::span<const int> prompt, std::size_t answer_length) {
    std::vector<int> seq(prompt.begin(), prompt.end());
    std::vector<int> out;
    out.reserve(answer_length);
    for (std::size_t t = 0; t < answer_length; ++t) {
        const Matrix logits = model.logits(seq);
        const auto last = logits.row(logits.rows() - 1);
        std::size_t best = 0;
        for (std::size_t j = 1; j < last.size(); ++j) {
            if (last[j] > last[best]) {
                best = j;
            }
        }
        out.push_back(static_cast<int>(best));
        seq.push_back(static_cast<int>(best));
    }
    return out;
}

double exact_match(const std::vector<std::vector<int>>& predictions, const std::vector<std::vector<int>>& references) {
    if (references.empty()) {
        throw std::invalid_argument("exact_match: empty dataset");
    }
    if (predictions.size() != references.size()) {
        throw std::invalid_argument("exact_match: " + std::to_string(predictions.size()) + " predictions for " +
                                    std::to_string(references.size()) + " references");
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < references.size(); ++i) {
        hits += predictions[i] == references[i] ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(references.size());
}

double evaluate_exact_match(const nn::Model& model, std::span<const Example> examples) {
    if (examples.empty()) {
        throw std::invalid_argument("evaluate_exact_match: empty dataset");
    }
    std::vector<std::vector<int>> predictions;
    std::vector<std::vector<int>> references;
    predictions.reserve(examples.size());
    references.reserve(examples.size());
    for (const auto& ex : examples) {
        predictions.push_back(greedy_decode(model, ex.prompt, ex.answer.size()));
        references.push_back(ex.answer);
    }
    return exact_match(predictions, references);
}

} // namespace lrsl::trainer
