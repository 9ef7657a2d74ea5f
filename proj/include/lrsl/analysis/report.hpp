#pragma once

#include "lrsl/analysis/forgetting.hpp"
#include "lrsl/analysis/projection.hpp"
#include "lrsl/analysis/similarity.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace lrsl::analysis {

struct ProjectionRow {
    std::size_t layer_index = 0;
    nn::Placement module = nn::Placement::query;
    ProjectionReport report;
};

struct ForgettingRow {
    std::string scheme;
    std::string corpus;
    ForgettingResult result;
};

// Reals are written with 17 significant digits; absent optionals are empty fields.
std::string similarity_csv(const std::vector<SimilarityRecord>& records);
std::string layer_mean_csv(const std::vector<LayerMean>& means);
std::string module_mean_csv(const std::vector<ModuleMean>& means);
std::string projection_csv(const std::vector<ProjectionRow>& rows);
std::string forgetting_csv(const std::vector<ForgettingRow>& rows);

/// Writes similarity.csv, similarity_layer_mean.csv and
/// similarity_module_mean.csv into `dir`.
void emit_similarity(const SweepResult& sweep, const std::filesystem::path& dir);
void emit_projection(const std::vector<ProjectionRow>& rows, const std::filesystem::path& path);
void emit_forgetting(const std::vector<ForgettingRow>& rows, const std::filesystem::path& path);

/// Parsers for the files above (header checked), used for round trips.
std::vector<SimilarityRecord> parse_similarity_csv(const std::string& text);
std::vector<ProjectionRow> parse_projection_csv(const std::string& text);
std::vector<ForgettingRow> parse_forgetting_csv(const std::string& text);

} // namespace lrsl::analysis
