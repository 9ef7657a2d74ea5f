#include "lrsl/analysis/similarity.hpp"

#include "lrsl/adapters/spectral.hpp"
#include "lrsl/linalg/svd.hpp"

#include <algorithm>
#include <map>

namespace lrsl::analysis {

namespace {

std::size_t block_index(const std::string& name) {
    constexpr std::string_view prefix = "blocks.";
    if (name.rfind(prefix, 0) != 0) {
        return 0;
    }
    return static_cast<std::size_t>(std::stoul(name.substr(prefix.size())));
}

} // namespace

Matrix left_singular_vectors(const Matrix& m, std::size_t lo, std::size_t hi) {
    return linalg::truncate(linalg::svd(m), lo, hi).u;
}

double basis_similarity(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols() || a.cols() == 0) {
        throw DimensionError("basis_similarity: bases " + a.shape_string() + " and " + b.shape_string() +
                             " are not comparable");
    }
    const double n = linalg::frobenius_norm(linalg::matmul_tn(a, b));
    return n * n / static_cast<double>(a.cols());
}

double subspace_similarity(const Matrix& m1, const Matrix& m2, std::size_t r) {
    if (m1.rows() != m2.rows()) {
        throw DimensionError("subspace_similarity: " + m1.shape_string() + " and " + m2.shape_string() +
                             " live in different column spaces");
    }
    const std::size_t limit = std::min({m1.rows(), m1.cols(), m2.rows(), m2.cols()});
    if (r == 0 || r > limit) {
        throw RankTooLargeError("rank-too-large: subspace_similarity needs 1 <= r <= " + std::to_string(limit) +
                                ", got " + std::to_string(r));
    }
    return basis_similarity(left_singular_vectors(m1, 0, r), left_singular_vectors(m2, 0, r));
}

std::string_view to_string(SimilarityTarget t) noexcept {
    switch (t) {
    case SimilarityTarget::top:
        return "top_r_of_W";
    case SimilarityTarget::bottom:
        return "bottom_r_of_W";
    case SimilarityTarget::random:
        return "random_r_of_W";
    }
    return "unknown";
}

Matrix random_basis(std::size_t rows, std::size_t cols, std::size_t r, std::uint64_t seed) {
    return left_singular_vectors(Matrix::gaussian(rows, cols, 1.0, seed), 0, r);
}

std::vector<ComparedLayer> compared_layers(const nn::Model& base, const nn::Model& finetuned) {
    const auto& bc = base.config();
    const auto& fc = finetuned.config();
    if (bc.vocab_size != fc.vocab_size || bc.d_model != fc.d_model || bc.n_layers != fc.n_layers ||
        bc.d_ff != fc.d_ff || bc.n_heads != fc.n_heads || bc.max_seq_len != fc.max_seq_len) {
        throw StructureMismatchError("compared models have different architectures");
    }
    const bool any_adapted = base.adapted_count() > 0 || finetuned.adapted_count() > 0;
    std::vector<ComparedLayer> out;
    const auto lb = base.linears();
    const auto lf = finetuned.linears();
    for (std::size_t i = 0; i < lb.size(); ++i) {
        const bool wanted = any_adapted ? (lb[i]->adapted || lf[i]->adapted) : nn::is_block_projection(lb[i]->placement);
        if (!wanted) {
            continue;
        }
        out.push_back({lb[i]->name, block_index(lb[i]->name), lb[i]->placement, lb[i]->effective_weight(),
                       lf[i]->effective_weight()});
    }
    return out;
}

SweepResult similarity_sweep(const std::vector<ComparedLayer>& layers, std::size_t r, std::uint64_t seed) {
    SweepResult result;
    for (const auto& layer : layers) {
        if (layer.base.rows() != layer.finetuned.rows() || layer.base.cols() != layer.finetuned.cols()) {
            throw StructureMismatchError("layer '" + layer.name + "' has shape " + layer.base.shape_string() +
                                         " in the base and " + layer.finetuned.shape_string() + " after finetuning");
        }
        const std::size_t k = std::min(layer.base.rows(), layer.base.cols());
        if (r == 0 || r > k) {
            throw RankTooLargeError("rank-too-large: layer '" + layer.name + "' supports r <= " + std::to_string(k) +
                                    ", got " + std::to_string(r));
        }
        const Matrix delta = layer.finetuned - layer.base;
        if (linalg::frobenius_norm(delta) <= kZeroUpdateTolerance * linalg::frobenius_norm(layer.base)) {
            result.unchanged_layers.push_back(layer.name);
            continue;
        }
        const Matrix delta_top = left_singular_vectors(delta, 0, r);
        const auto f = linalg::svd(layer.base);
        const Matrix w_top = linalg::truncate(f, 0, r).u;
        const Matrix w_bottom = linalg::truncate(f, k - r, k).u;
        const Matrix w_random =
            random_basis(layer.base.rows(), layer.base.cols(), r, adapters::layer_seed(seed, layer.name));
        for (auto [target, basis] : {std::pair{SimilarityTarget::top, &w_top},
                                     std::pair{SimilarityTarget::bottom, &w_bottom},
                                     std::pair{SimilarityTarget::random, &w_random}}) {
            result.records.push_back({layer.layer_index, layer.module, target, r, basis_similarity(delta_top, *basis)});
        }
    }
    result.zero_update = result.records.empty();

    std::map<std::pair<std::size_t, SimilarityTarget>, std::pair<double, std::size_t>> by_layer;
    std::map<std::pair<nn::Placement, SimilarityTarget>, std::pair<double, std::size_t>> by_module;
    for (const auto& rec : result.records) {
        auto& l = by_layer[{rec.layer_index, rec.target}];
        l.first += rec.phi;
        ++l.second;
        auto& m = by_module[{rec.module, rec.target}];
        m.first += rec.phi;
        ++m.second;
    }
    for (const auto& [key, acc] : by_layer) {
        result.layer_means.push_back({key.first, key.second, r, acc.first / static_cast<double>(acc.second), acc.second});
    }
    for (const auto& [key, acc] : by_module) {
        result.module_means.push_back({key.first, key.second, r, acc.first / static_cast<double>(acc.second), acc.second});
    }
    return result;
}

SweepResult similarity_sweep(const nn::Model& base, const nn::Model& finetuned, std::size_t r, std::uint64_t seed) {
    return similarity_sweep(compared_layers(base, finetuned), r, seed);
}

} // namespace lrsl::analysis
