#include "lrsl/cli/decompose.hpp"

#include "lrsl/trainer/checkpoint.hpp"
#include "lrsl/util/csv.hpp"

#include <algorithm>

namespace lrsl::cli {

namespace fs = std::filesystem;
using trainer::CheckpointError;
using trainer::CheckpointErrorKind;
using trainer::Json;

linalg::Matrix StoredSplit::reassembled() const { return w_p + linalg::matmul(b, a); }

std::string split_file_name(const std::string& layer) { return layer + ".split"; }

void save_split(const fs::path& path, const std::string& layer, const adapters::SpectralSplit& split) {
    trainer::CheckpointFile file;
    file.metadata = Json{{"format", "lrsl"},
                         {"kind", "split"},
                         {"layer", layer},
                         {"mode", adapters::to_string(split.mode)},
                         {"rank", split.rank},
                         {"kept_indices", split.selected_indices},
                         {"kept_sigma", split.selected_sigma}};
    file.tensors = {{"w_p", split.w_p}, {"b", split.b}, {"a", split.a}};
    trainer::write_checkpoint_file(path, file);
}

StoredSplit load_split(const fs::path& path) {
    const auto file = trainer::read_checkpoint_file(path);
    const Json& meta = file.metadata;
    StoredSplit s;
    try {
        if (meta.at("kind").get<std::string>() != "split") {
            throw CheckpointError(CheckpointErrorKind::malformed, path.string() + " is not a split file");
        }
        s.layer = meta.at("layer").get<std::string>();
        const auto mode = adapters::parse_split_mode(meta.at("mode").get<std::string>());
        if (!mode) {
            throw CheckpointError(CheckpointErrorKind::malformed, "unknown split mode in " + path.string());
        }
        s.mode = *mode;
        s.rank = meta.at("rank").get<std::size_t>();
        s.kept_indices = meta.at("kept_indices").get<std::vector<std::size_t>>();
        s.kept_sigma = meta.at("kept_sigma").get<std::vector<double>>();
    } catch (const Json::exception& e) {
        throw CheckpointError(CheckpointErrorKind::malformed, path.string() + ": " + e.what());
    }
    for (const char* name : {"w_p", "b", "a"}) {
        if (file.find(name) == nullptr) {
            throw CheckpointError(CheckpointErrorKind::missing_tensor, std::string(name) + " in " + path.string());
        }
    }
    s.w_p = file.find("w_p")->value;
    s.b = file.find("b")->value;
    s.a = file.find("a")->value;
    if (s.b.rows() != s.w_p.rows() || s.a.cols() != s.w_p.cols() || s.b.cols() != s.rank || s.a.rows() != s.rank) {
        throw CheckpointError(CheckpointErrorKind::shape_mismatch, "factor shapes disagree in " + path.string());
    }
    return s;
}

std::vector<SplitSummary> decompose_model(const nn::Model& model, std::size_t rank, adapters::SplitMode mode,
                                          std::uint64_t seed, const fs::path& dir) {
    std::vector<const nn::Linear*> targets;
    for (const nn::Linear* lin : model.linears()) {
        if (!nn::is_block_projection(lin->placement)) {
            continue;
        }
        const std::size_t k = std::min(lin->out_features(), lin->in_features());
        if (rank == 0 || rank > k) {
            throw RankTooLargeError("rank-too-large: layer '" + lin->name + "' supports 1 <= r <= " +
                                    std::to_string(k) + ", got " + std::to_string(rank));
        }
        targets.push_back(lin);
    }
    fs::create_directories(dir);
    std::vector<SplitSummary> out;
    for (const nn::Linear* lin : targets) {
        const auto split =
            adapters::spectral_split(lin->effective_weight(), rank, mode, adapters::layer_seed(seed, lin->name));
        save_split(dir / split_file_name(lin->name), lin->name, split);
        const auto& sigma = split.factorization.sigma;
        SplitSummary s;
        s.layer = lin->name;
        s.module = lin->placement;
        s.rows = lin->out_features();
        s.cols = lin->in_features();
        s.mode = mode;
        s.rank = rank;
        s.kept_indices = split.selected_indices;
        s.kept_sigma_max = *std::max_element(split.selected_sigma.begin(), split.selected_sigma.end());
        s.kept_sigma_min = *std::min_element(split.selected_sigma.begin(), split.selected_sigma.end());
        s.sigma_max = sigma.front();
        s.sigma_min = sigma.back();
        out.push_back(std::move(s));
    }
    return out;
}

std::string split_summary_csv(const std::vector<SplitSummary>& rows) {
    std::vector<util::CsvRow> body;
    for (const auto& s : rows) {
        std::string kept;
        for (std::size_t i = 0; i < s.kept_indices.size(); ++i) {
            kept += (i == 0 ? "" : ";") + std::to_string(s.kept_indices[i]);
        }
        body.push_back({s.layer, std::string(nn::to_string(s.module)), std::to_string(s.rows), std::to_string(s.cols),
                        std::string(adapters::to_string(s.mode)), std::to_string(s.rank), kept,
                        util::format_real(s.kept_sigma_max), util::format_real(s.kept_sigma_min),
                        util::format_real(s.sigma_max), util::format_real(s.sigma_min)});
    }
    return util::to_csv({"layer", "module", "rows", "cols", "mode", "r", "kept_indices", "kept_sigma_max",
                         "kept_sigma_min", "sigma_max", "sigma_min"},
                        body);
}

} // namespace lrsl::cli
