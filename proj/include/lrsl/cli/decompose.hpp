#pragma once

#include "lrsl/adapters/spectral.hpp"
#include "lrsl/nn/transformer.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace lrsl::cli {

/// One split layer as stored on disk: W = w_p + b * a.
struct StoredSplit {
    std::string layer;
    adapters::SplitMode mode = adapters::SplitMode::minor;
    std::size_t rank = 0;
    std::vector<std::size_t> kept_indices;
    std::vector<double> kept_sigma;
    linalg::Matrix w_p;
    linalg::Matrix b;
    linalg::Matrix a;

    linalg::Matrix reassembled() const;
};

struct SplitSummary {
    std::string layer;
    nn::Placement module;
    std::size_t rows = 0;
    std::size_t cols = 0;
    adapters::SplitMode mode = adapters::SplitMode::minor;
    std::size_t rank = 0;
    std::vector<std::size_t> kept_indices;
    double kept_sigma_max = 0.0;
    double kept_sigma_min = 0.0;
    double sigma_max = 0.0; // over the whole spectrum
    double sigma_min = 0.0;
};

/// Split file name for a layer, e.g. "blocks.0.query.split".
std::string split_file_name(const std::string& layer);

void save_split(const std::filesystem::path& path, const std::string& layer, const adapters::SpectralSplit& split);
/// Throws CheckpointError.
StoredSplit load_split(const std::filesystem::path& path);

/// Splits every block projection of the model (its effective weight when
/// adapted) and writes one file per layer into `dir`. Random mode seeds each
/// layer with layer_seed(seed, name). Checks every layer's rank before writing.
std::vector<SplitSummary> decompose_model(const nn::Model& model, std::size_t rank, adapters::SplitMode mode,
                                          std::uint64_t seed, const std::filesystem::path& dir);

/// Header: layer,module,rows,cols,mode,r,kept_indices,kept_sigma_max,kept_sigma_min,sigma_max,sigma_min
/// with kept_indices separated by ';'.
std::string split_summary_csv(const std::vector<SplitSummary>& rows);

} // namespace lrsl::cli
