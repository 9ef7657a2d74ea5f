#include "lrsl/analysis/forgetting.hpp"

#include "lrsl/nn/ops.hpp"

#include <cmath>

namespace lrsl::analysis {

namespace {

struct Sums {
    double cross = 0.0;
    double entropy = 0.0;
    std::size_t rows = 0;
};

void accumulate(Sums& s, const Matrix& base_logits, const Matrix& finetuned_logits) {
    linalg::require_same_shape(base_logits, finetuned_logits, "forgetting");
    const Matrix log_p = nn::log_softmax_rows(base_logits);
    const Matrix log_q = nn::log_softmax_rows(finetuned_logits);
    for (std::size_t i = 0; i < log_p.rows(); ++i) {
        double cross = 0.0;
        double entropy = 0.0;
        for (std::size_t j = 0; j < log_p.cols(); ++j) {
            const double p = std::exp(log_p(i, j));
            cross -= p * log_q(i, j);
            entropy -= p * log_p(i, j);
        }
        s.cross += cross;
        s.entropy += entropy;
    }
    s.rows += log_p.rows();
}

ForgettingResult finish(const Sums& s) {
    const auto n = static_cast<double>(s.rows);
    return {s.cross / n, s.entropy / n, s.rows};
}

} // namespace

ForgettingResult forgetting_from_logits(const Matrix& base_logits, const Matrix& finetuned_logits) {
    if (base_logits.rows() == 0) {
        throw std::invalid_argument("forgetting_from_logits: no positions");
    }
    Sums s;
    accumulate(s, base_logits, finetuned_logits);
    return finish(s);
}

ForgettingResult forgetting_loss(const nn::Model& base, const nn::Model& finetuned,
                                 std::span<const std::vector<int>> corpus) {
    if (base.config().vocab_size != finetuned.config().vocab_size) {
        throw StructureMismatchError("forgetting_loss: vocabularies differ (" +
                                     std::to_string(base.config().vocab_size) + " vs " +
                                     std::to_string(finetuned.config().vocab_size) + ")");
    }
    if (corpus.empty()) {
        throw std::invalid_argument("forgetting_loss: empty corpus");
    }
    Sums s;
    for (const auto& seq : corpus) {
        accumulate(s, base.logits(seq), finetuned.logits(seq));
    }
    return finish(s);
}

} // namespace lrsl::analysis
