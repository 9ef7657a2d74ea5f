#pragma once

#include "lrsl/errors.hpp"
#include "lrsl/nn/transformer.hpp"
#include "lrsl/trainer/config_io.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace lrsl::trainer {

// Binary layout:
//   "MLRS" | u32 LE version | u64 LE metadata length | metadata JSON |
//   zero padding to an 8-byte boundary | payload
// The metadata's "tensors" table lists name, dtype ("f64" or "f32"), shape,
// offset and length in bytes. Offsets are relative to the payload start and
// every tensor starts 8-byte aligned. Data is row-major little-endian.

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class CheckpointErrorKind {
    io,
    bad_magic,
    version_mismatch,
    truncated,
    malformed,
    unknown_tensor,
    missing_tensor,
    shape_mismatch,
};

std::string_view to_string(CheckpointErrorKind kind) noexcept;

class CheckpointError : public DataIntegrityError {
public:
    CheckpointError(CheckpointErrorKind kind, const std::string& what)
        : DataIntegrityError(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
    CheckpointErrorKind kind() const noexcept { return kind_; }

private:
    CheckpointErrorKind kind_;
};

struct TensorRecord {
    std::string name;
    Matrix value;
};

/// Generic container: free-form metadata plus named f64 tensors. The
/// writer fills metadata["tensors"]; callers must not set it.
struct CheckpointFile {
    Json metadata = Json::object();
    std::vector<TensorRecord> tensors;

    const TensorRecord* find(std::string_view name) const;
};

std::string encode_checkpoint(const CheckpointFile& file);
/// Throws CheckpointError. f32 tensors are widened to double.
CheckpointFile decode_checkpoint(std::string_view bytes);

/// Atomic: writes a temporary sibling and renames it over `path`.
void write_checkpoint_file(const std::filesystem::path& path, const CheckpointFile& file);
CheckpointFile read_checkpoint_file(const std::filesystem::path& path);

struct CheckpointInfo {
    std::uint64_t step = 0;
    std::map<std::string, double> metrics;
};

/// Whole model, including any adapter factors and the adapter config.
CheckpointFile model_to_checkpoint(const nn::Model& model, const CheckpointInfo& info = {});
nn::Model model_from_checkpoint(const CheckpointFile& file, CheckpointInfo* info = nullptr);

void save_checkpoint(const nn::Model& model, const std::filesystem::path& path, const CheckpointInfo& info = {});
nn::Model load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info = nullptr);

struct AdapterLayer {
    std::string name;
    double scaling = 1.0;
    Matrix a; // r x n
    Matrix b; // m x r
};

/// Adapter-only export: (name, scaling, a, b) per adapted layer plus the
/// configs needed to rebuild the frozen part from a base model.
struct AdapterExport {
    nn::TransformerConfig model_config;
    adapters::AdapterConfig config;
    std::vector<AdapterLayer> layers;
};

AdapterExport export_adapters(const nn::Model& model);
CheckpointFile adapters_to_checkpoint(const AdapterExport& exported, const CheckpointInfo& info = {});
AdapterExport adapters_from_checkpoint(const CheckpointFile& file);
void save_adapters(const nn::Model& model, const std::filesystem::path& path, const CheckpointInfo& info = {});
AdapterExport load_adapters(const std::filesystem::path& path);

/// Rebuilds the adapted model from the pretrained base: re-runs the
/// deterministic adapter initialization to recover the frozen parts, then
/// installs the exported factors. Throws CheckpointError(unknown_tensor)
/// when a layer name does not resolve and ConfigError on config mismatch.
nn::Model reassemble(const nn::Model& base, const AdapterExport& exported);

} // namespace lrsl::trainer
