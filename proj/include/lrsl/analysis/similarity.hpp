#pragma once

#include "lrsl/errors.hpp"
#include "lrsl/linalg/matrix.hpp"
#include "lrsl/nn/transformer.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lrsl::analysis {

using linalg::Matrix;

/// Two checkpoints or models cannot be compared layer by layer.
class StructureMismatchError : public DataIntegrityError {
public:
    using DataIntegrityError::DataIntegrityError;
};

/// Columns lo..hi-1 of the left singular vectors of m.
Matrix left_singular_vectors(const Matrix& m, std::size_t lo, std::size_t hi);

/// ||A^T B||_F^2 / r for two m x r column-orthonormal matrices.
double basis_similarity(const Matrix& a, const Matrix& b);

/// Similarity of the top-r left singular subspaces of m1 and m2, in [0, 1].
/// Throws RankTooLargeError when r exceeds either matrix's min(rows, cols),
/// DimensionError when the row counts differ.
double subspace_similarity(const Matrix& m1, const Matrix& m2, std::size_t r);

enum class SimilarityTarget { top, bottom, random };

/// "top_r_of_W", "bottom_r_of_W", "random_r_of_W".
std::string_view to_string(SimilarityTarget t) noexcept;

struct SimilarityRecord {
    std::size_t layer_index = 0;
    nn::Placement module = nn::Placement::query;
    SimilarityTarget target = SimilarityTarget::top;
    std::size_t r = 0;
    double phi = 0.0;
};

struct LayerMean {
    std::size_t layer_index = 0;
    SimilarityTarget target = SimilarityTarget::top;
    std::size_t r = 0;
    double mean_phi = 0.0;
    std::size_t count = 0;
};

struct ModuleMean {
    nn::Placement module = nn::Placement::query;
    SimilarityTarget target = SimilarityTarget::top;
    std::size_t r = 0;
    double mean_phi = 0.0;
    std::size_t count = 0;
};

struct SweepResult {
    /// Set when every compared layer has delta W = 0; records are then empty.
    bool zero_update = false;
    std::vector<std::string> unchanged_layers;
    std::vector<SimilarityRecord> records;
    std::vector<LayerMean> layer_means;
    std::vector<ModuleMean> module_means;
};

/// A projection the sweeps compare: its name, block index and weights.
struct ComparedLayer {
    std::string name;
    std::size_t layer_index = 0;
    nn::Placement module = nn::Placement::query;
    Matrix base;
    Matrix finetuned;
};

/// Layers to compare: the adapted projections of either model, or every
/// block projection when neither carries adapters. Weights are the
/// effective (merged) ones. Throws StructureMismatchError.
std::vector<ComparedLayer> compared_layers(const nn::Model& base, const nn::Model& finetuned);

/// delta W counts as zero when ||delta W||_F <= this times ||W||_F.
inline constexpr double kZeroUpdateTolerance = 1e-12;

/// For every compared layer: phi between the top-r left singular vectors of
/// delta W and the top-r, bottom-r and random-r singular vectors of W. The
/// random basis comes from a Gaussian matrix of W's shape seeded from
/// `seed` and the layer name.
SweepResult similarity_sweep(const std::vector<ComparedLayer>& layers, std::size_t r, std::uint64_t seed = 0);
SweepResult similarity_sweep(const nn::Model& base, const nn::Model& finetuned, std::size_t r,
                             std::uint64_t seed = 0);

/// Left singular basis of a seeded Gaussian matrix with the given shape.
Matrix random_basis(std::size_t rows, std::size_t cols, std::size_t r, std::uint64_t seed);

} // namespace lrsl::analysis
