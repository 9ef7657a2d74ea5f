#include "lrsl/analysis/report.hpp"

#include "lrsl/util/csv.hpp"

#include <stdexcept>

namespace lrsl::analysis {

namespace {

using util::CsvRow;
using util::format_real;

const CsvRow kSimilarityHeader{"layer", "module", "target", "r", "phi"};
const CsvRow kProjectionHeader{"layer", "module", "basis_source", "r", "w_norm", "proj_w_norm", "proj_delta_norm",
                               "amplification"};
const CsvRow kForgettingHeader{"scheme", "corpus", "loss", "base_entropy"};

std::string optional_real(const std::optional<double>& v) { return v ? format_real(*v) : std::string(); }

std::vector<CsvRow> body(const std::string& text, const CsvRow& header, const char* what) {
    auto rows = util::parse_csv(text);
    if (rows.empty() || rows.front() != header) {
        throw DataIntegrityError(std::string(what) + ": unexpected header");
    }
    rows.erase(rows.begin());
    for (const auto& r : rows) {
        if (r.size() != header.size()) {
            throw DataIntegrityError(std::string(what) + ": row with " + std::to_string(r.size()) + " fields");
        }
    }
    return rows;
}

nn::Placement placement_of(const std::string& s) {
    auto p = nn::parse_placement(s);
    if (!p) {
        throw DataIntegrityError("unknown module label '" + s + "'");
    }
    return *p;
}

SimilarityTarget target_of(const std::string& s) {
    for (auto t : {SimilarityTarget::top, SimilarityTarget::bottom, SimilarityTarget::random}) {
        if (to_string(t) == s) {
            return t;
        }
    }
    throw DataIntegrityError("unknown similarity target '" + s + "'");
}

} // namespace

std::string similarity_csv(const std::vector<SimilarityRecord>& records) {
    std::vector<CsvRow> rows;
    for (const auto& r : records) {
        rows.push_back({std::to_string(r.layer_index), std::string(nn::to_string(r.module)),
                        std::string(to_string(r.target)), std::to_string(r.r), format_real(r.phi)});
    }
    return util::to_csv(kSimilarityHeader, rows);
}

std::string layer_mean_csv(const std::vector<LayerMean>& means) {
    std::vector<CsvRow> rows;
    for (const auto& m : means) {
        rows.push_back({std::to_string(m.layer_index), std::string(to_string(m.target)), std::to_string(m.r),
                        format_real(m.mean_phi), std::to_string(m.count)});
    }
    return util::to_csv({"layer", "target", "r", "mean_phi", "count"}, rows);
}

std::string module_mean_csv(const std::vector<ModuleMean>& means) {
    std::vector<CsvRow> rows;
    for (const auto& m : means) {
        rows.push_back({std::string(nn::to_string(m.module)), std::string(to_string(m.target)), std::to_string(m.r),
                        format_real(m.mean_phi), std::to_string(m.count)});
    }
    return util::to_csv({"module", "target", "r", "mean_phi", "count"}, rows);
}

std::string projection_csv(const std::vector<ProjectionRow>& rows) {
    std::vector<CsvRow> out;
    for (const auto& row : rows) {
        const auto& rep = row.report;
        out.push_back({std::to_string(row.layer_index), std::string(nn::to_string(row.module)),
                       std::string(to_string(rep.basis_source)), std::to_string(rep.r), format_real(rep.w_norm),
                       format_real(rep.proj_w_norm), optional_real(rep.proj_delta_norm),
                       optional_real(rep.amplification)});
    }
    return util::to_csv(kProjectionHeader, out);
}

std::string forgetting_csv(const std::vector<ForgettingRow>& rows) {
    std::vector<CsvRow> out;
    for (const auto& row : rows) {
        out.push_back({row.scheme, row.corpus, format_real(row.result.loss), format_real(row.result.base_entropy)});
    }
    return util::to_csv(kForgettingHeader, out);
}

void emit_similarity(const SweepResult& sweep, const std::filesystem::path& dir) {
    util::write_file_atomic(dir / "similarity.csv", similarity_csv(sweep.records));
    util::write_file_atomic(dir / "similarity_layer_mean.csv", layer_mean_csv(sweep.layer_means));
    util::write_file_atomic(dir / "similarity_module_mean.csv", module_mean_csv(sweep.module_means));
}

void emit_projection(const std::vector<ProjectionRow>& rows, const std::filesystem::path& path) {
    util::write_file_atomic(path, projection_csv(rows));
}

void emit_forgetting(const std::vector<ForgettingRow>& rows, const std::filesystem::path& path) {
    util::write_file_atomic(path, forgetting_csv(rows));
}

std::vector<SimilarityRecord> parse_similarity_csv(const std::string& text) {
    std::vector<SimilarityRecord> out;
    for (const auto& r : body(text, kSimilarityHeader, "similarity.csv")) {
        out.push_back({std::stoul(r[0]), placement_of(r[1]), target_of(r[2]), std::stoul(r[3]), util::parse_real(r[4])});
    }
    return out;
}

std::vector<ProjectionRow> parse_projection_csv(const std::string& text) {
    std::vector<ProjectionRow> out;
    for (const auto& r : body(text, kProjectionHeader, "projection.csv")) {
        ProjectionRow row;
        row.layer_index = std::stoul(r[0]);
        row.module = placement_of(r[1]);
        const auto source = parse_basis_source(r[2]);
        if (!source) {
            throw DataIntegrityError("unknown basis source '" + r[2] + "'");
        }
        row.report.basis_source = *source;
        row.report.r = std::stoul(r[3]);
        row.report.w_norm = util::parse_real(r[4]);
        row.report.proj_w_norm = util::parse_real(r[5]);
        if (!r[6].empty()) {
            row.report.proj_delta_norm = util::parse_real(r[6]);
        }
        if (!r[7].empty()) {
            row.report.amplification = util::parse_real(r[7]);
        }
        row.report.zero_update = !row.report.proj_delta_norm;
        out.push_back(row);
    }
    return out;
}

std::vector<ForgettingRow> parse_forgetting_csv(const std::string& text) {
    std::vector<ForgettingRow> out;
    for (const auto& r : body(text, kForgettingHeader, "forgetting.csv")) {
        out.push_back({r[0], r[1], {util::parse_real(r[2]), util::parse_real(r[3]), 0}});
    }
    return out;
}

} // namespace lrsl::analysis
