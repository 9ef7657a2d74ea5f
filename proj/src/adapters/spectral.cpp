#include "lrsl/adapters/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace lrsl::adapters {

std::string_view to_string(SplitMode m) noexcept {
    switch (m) {
    case SplitMode::minor:
        return "minor";
    case SplitMode::principal:
        return "principal";
    case SplitMode::random:
        return "random";
    }
    return "unknown";
}

std::optional<SplitMode> parse_split_mode(std::string_view name) noexcept {
    if (name == "minor") {
        return SplitMode::minor;
    }
    if (name == "principal") {
        return SplitMode::principal;
    }
    if (name == "random") {
        return SplitMode::random;
    }
    return std::nullopt;
}

std::vector<std::size_t> select_components(std::size_t k, std::size_t r, SplitMode mode, std::uint64_t seed) {
    if (r == 0 || r > k) {
        throw RankTooLargeError("rank-too-large: rank " + std::to_string(r) + " not in [1, " + std::to_string(k) +
                                "]");
    }
    std::vector<std::size_t> idx(k);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    switch (mode) {
    case SplitMode::principal:
        idx.resize(r);
        break;
    case SplitMode::minor:
        idx.erase(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k - r));
        break;
    case SplitMode::random: {
        std::mt19937_64 rng(seed);
        for (std::size_t i = k - 1; i > 0; --i) {
            std::uniform_int_distribution<std::size_t> pick(0, i);
            std::swap(idx[i], idx[pick(rng)]);
        }
        idx.resize(r);
        std::sort(idx.begin(), idx.end());
        break;
    }
    }
    return idx;
}

SpectralSplit spectral_split(const Matrix& w, std::size_t r, SplitMode mode, std::uint64_t seed) {
    const std::size_t k = std::min(w.rows(), w.cols());
    if (r == 0 || r > k) {
        throw RankTooLargeError("rank-too-large: rank " + std::to_string(r) + " exceeds min dimension of " +
                                w.shape_string());
    }
    SpectralSplit split;
    split.rank = r;
    split.mode = mode;
    split.factorization = linalg::svd(w);
    split.selected_indices = select_components(k, r, mode, seed);

    const auto& f = split.factorization;
    split.b = Matrix(w.rows(), r);
    split.a = Matrix(r, w.cols());
    for (std::size_t c = 0; c < r; ++c) {
        const std::size_t i = split.selected_indices[c];
        const double sigma = f.sigma[i];
        const double root = std::sqrt(sigma);
        split.selected_sigma.push_back(sigma);
        for (std::size_t row = 0; row < w.rows(); ++row) {
            split.b(row, c) = f.u(row, i) * root;
        }
        for (std::size_t col = 0; col < w.cols(); ++col) {
            split.a(c, col) = root * f.v(col, i);
        }
    }
    split.w_p = w - linalg::matmul(split.b, split.a);
    return split;
}

SplitMode split_mode_for(Scheme scheme) {
    switch (scheme) {
    case Scheme::milora:
        return SplitMode::minor;
    case Scheme::pissa:
        return SplitMode::principal;
    case Scheme::random_components:
        return SplitMode::random;
    case Scheme::lora:
        break;
    }
    throw ConfigError("scheme lora has no spectral split mode");
}

std::uint64_t layer_seed(std::uint64_t base_seed, std::string_view layer_name) noexcept {
    std::uint64_t h = 1469598103934665603ULL ^ base_seed;
    for (char c : layer_name) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    // splitmix64 finaliser
    h += 0x9e3779b97f4a7c15ULL;
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
    return h ^ (h >> 31);
}

AdaptedLinear init_adapter(std::string name, const Matrix& weight, const AdapterConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const std::size_t k = std::min(weight.rows(), weight.cols());
    if (cfg.rank > k) {
        throw RankTooLargeError("rank-too-large: rank " + std::to_string(cfg.rank) + " exceeds min dimension of " +
                                name + " (" + weight.shape_string() + ")");
    }
    if (cfg.scheme == Scheme::lora) {
        const double stddev = 1.0 / std::sqrt(static_cast<double>(weight.cols()));
        return AdaptedLinear(std::move(name), weight, Matrix(weight.rows(), cfg.rank),
                             Matrix::gaussian(cfg.rank, weight.cols(), stddev, seed), cfg.scaling(), cfg.dropout);
    }
    SpectralSplit split = spectral_split(weight, cfg.rank, split_mode_for(cfg.scheme), seed);
    return AdaptedLinear(std::move(name), std::move(split.w_p), std::move(split.b), std::move(split.a),
                         cfg.scaling(), cfg.dropout);
}

namespace {

std::vector<nn::Linear*> targets(nn::Model& model, const AdapterConfig& cfg) {
    cfg.validate();
    if (model.adapted_count() > 0) {
        throw ConfigError("model already carries adapters");
    }
    std::vector<nn::Linear*> out;
    std::set<nn::Placement> seen;
    for (auto* lin : model.linears()) {
        seen.insert(lin->placement);
        if (cfg.placement.contains(lin->placement)) {
            const std::size_t k = std::min(lin->out_features(), lin->in_features());
            if (cfg.rank > k) {
                throw RankTooLargeError("rank-too-large: rank " + std::to_string(cfg.rank) +
                                        " exceeds min dimension " + std::to_string(k) + " of " + lin->name);
            }
            out.push_back(lin);
        }
    }
    for (auto p : cfg.placement) {
        if (!seen.contains(p)) {
            throw ConfigError("placement label '" + std::string(nn::to_string(p)) + "' does not exist in the model");
        }
    }
    return out;
}

AdaptationSummary finish(nn::Model& model, const AdapterConfig& cfg, std::size_t adapted) {
    model.set_adapter_config(cfg);
    AdaptationSummary s;
    s.adapted_layers = adapted;
    s.trainable = model.trainable_count();
    s.total = model.parameter_count();
    return s;
}

} // namespace

AdaptationSummary apply_adapters(nn::Model& model, const AdapterConfig& cfg) {
    auto layers = targets(model, cfg);
    model.set_trainable(false);
    for (auto* lin : layers) {
        lin->adapted.emplace(init_adapter(lin->name, lin->weight.value(), cfg, layer_seed(cfg.seed, lin->name)));
        lin->weight = nn::Tensor();
    }
    return finish(model, cfg, layers.size());
}

void attach_adapter_slots(nn::Model& model, const AdapterConfig& cfg) {
    auto layers = targets(model, cfg);
    model.set_trainable(false);
    for (auto* lin : layers) {
        const std::size_t m = lin->out_features();
        const std::size_t n = lin->in_features();
        lin->adapted.emplace(lin->name, Matrix(m, n), Matrix(m, cfg.rank), Matrix(cfg.rank, n), cfg.scaling(),
                             cfg.dropout);
        lin->weight = nn::Tensor();
    }
    finish(model, cfg, layers.size());
}

std::size_t expected_trainable_count(const nn::Model& model, const AdapterConfig& cfg) {
    std::size_t n = 0;
    for (const auto* lin : model.linears()) {
        if (cfg.placement.contains(lin->placement)) {
            n += cfg.rank * (lin->out_features() + lin->in_features());
        }
    }
    return n;
}

} // namespace lrsl::adapters
