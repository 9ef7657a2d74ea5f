#include "lrsl/trainer/checkpoint.hpp"

#include "lrsl/adapters/spectral.hpp"
#include "lrsl/util/csv.hpp"

#include <bit>
#include <cstring>
#include <unordered_map>
#include <unordered_set>

namespace lrsl::trainer {

namespace {

constexpr char kMagic[4] = {'M', 'L', 'R', 'S'};
constexpr std::size_t kHeaderSize = 16;

std::size_t align8(std::size_t n) { return (n + 7) & ~std::size_t{7}; }

template <class T>
void put_le(std::string& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
    }
}

template <class T>
T get_le(std::string_view bytes, std::size_t at) {
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        value |= static_cast<T>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
    }
    return value;
}

[[noreturn]] void fail(CheckpointErrorKind kind, const std::string& what) { throw CheckpointError(kind, what); }

Matrix read_tensor(std::string_view payload, const Json& entry, std::size_t index) {
    const std::string where = "tensor table entry " + std::to_string(index);
    if (!entry.is_object() || !entry.contains("name") || !entry["name"].is_string() || !entry.contains("dtype") ||
        !entry["dtype"].is_string() || !entry.contains("shape") || !entry["shape"].is_array() ||
        entry["shape"].size() != 2 || !entry.contains("offset") || !entry["offset"].is_number_unsigned() ||
        !entry.contains("length") || !entry["length"].is_number_unsigned()) {
        fail(CheckpointErrorKind::malformed, where + " lacks name, dtype, 2-d shape, offset or length");
    }
    for (const auto& d : entry["shape"]) {
        if (!d.is_number_unsigned()) {
            fail(CheckpointErrorKind::malformed, where + " has a non-integer shape");
        }
    }
    const std::string dtype = entry["dtype"].get<std::string>();
    std::size_t width = 0;
    if (dtype == "f64") {
        width = 8;
    } else if (dtype == "f32") {
        width = 4;
    } else {
        fail(CheckpointErrorKind::malformed, where + " has unsupported dtype '" + dtype + "'");
    }
    const auto rows = entry["shape"][0].get<std::size_t>();
    const auto cols = entry["shape"][1].get<std::size_t>();
    const auto offset = entry["offset"].get<std::size_t>();
    const auto length = entry["length"].get<std::size_t>();
    if (length != rows * cols * width) {
        fail(CheckpointErrorKind::malformed, where + " length " + std::to_string(length) + " does not match shape");
    }
    if (offset % 8 != 0) {
        fail(CheckpointErrorKind::malformed, where + " offset is not 8-byte aligned");
    }
    if (offset > payload.size() || length > payload.size() - offset) {
        fail(CheckpointErrorKind::truncated, "payload ends before tensor '" + entry["name"].get<std::string>() + "'");
    }
    Matrix m(rows, cols);
    auto data = m.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (width == 8) {
            data[i] = std::bit_cast<double>(get_le<std::uint64_t>(payload, offset + 8 * i));
        } else {
            data[i] = static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(payload, offset + 4 * i)));
        }
    }
    return m;
}

std::map<std::string, double> read_metrics(const Json& meta) {
    std::map<std::string, double> out;
    if (const auto it = meta.find("metrics"); it != meta.end() && it->is_object()) {
        for (const auto& [k, v] : it->items()) {
            if (v.is_number()) {
                out[k] = v.get<double>();
            }
        }
    }
    return out;
}

void require_kind(const CheckpointFile& file, const char* kind) {
    const auto it = file.metadata.find("kind");
    if (it == file.metadata.end() || !it->is_string() || it->get<std::string>() != kind) {
        fail(CheckpointErrorKind::malformed,
             std::string("expected a checkpoint of kind '") + kind + "', found " +
                 (it == file.metadata.end() ? std::string("none") : it->dump()));
    }
}

template <class Parsed, class Parser>
Parsed parse_section(const Json& meta, const char* key, Parser parser) {
    if (!meta.contains(key)) {
        fail(CheckpointErrorKind::malformed, std::string("metadata lacks '") + key + "'");
    }
    std::vector<std::string> errors;
    Parsed cfg = parser(meta[key], key, errors);
    collect_validation(cfg, key, errors);
    if (!errors.empty()) {
        std::string msg = "invalid metadata";
        for (const auto& e : errors) {
            msg += "; " + e;
        }
        fail(CheckpointErrorKind::malformed, msg);
    }
    return cfg;
}

Json info_json(Json meta, const CheckpointInfo& info) {
    meta["step"] = info.step;
    Json metrics = Json::object();
    for (const auto& [k, v] : info.metrics) {
        metrics[k] = v;
    }
    meta["metrics"] = metrics;
    return meta;
}

void read_info(const Json& meta, CheckpointInfo* info) {
    if (info == nullptr) {
        return;
    }
    info->step = meta.contains("step") && meta["step"].is_number_unsigned() ? meta["step"].get<std::uint64_t>() : 0;
    info->metrics = read_metrics(meta);
}

} // namespace

std::string_view to_string(CheckpointErrorKind kind) noexcept {
    switch (kind) {
    case CheckpointErrorKind::io:
        return "io-error";
    case CheckpointErrorKind::bad_magic:
        return "bad-magic";
    case CheckpointErrorKind::version_mismatch:
        return "version-mismatch";
    case CheckpointErrorKind::truncated:
        return "truncated";
    case CheckpointErrorKind::malformed:
        return "malformed-metadata";
    case CheckpointErrorKind::unknown_tensor:
        return "unknown-tensor";
    case CheckpointErrorKind::missing_tensor:
        return "missing-tensor";
    case CheckpointErrorKind::shape_mismatch:
        return "shape-mismatch";
    }
    return "unknown";
}

const TensorRecord* CheckpointFile::find(std::string_view name) const {
    for (const auto& t : tensors) {
        if (t.name == name) {
            return &t;
        }
    }
    return nullptr;
}

std::string encode_checkpoint(const CheckpointFile& file) {
    Json meta = file.metadata;
    Json table = Json::array();
    std::size_t offset = 0;
    std::unordered_set<std::string> names;
    for (const auto& t : file.tensors) {
        if (!names.insert(t.name).second) {
            throw std::invalid_argument("encode_checkpoint: duplicate tensor name '" + t.name + "'");
        }
        const std::size_t length = t.value.size() * 8;
        table.push_back(Json{{"name", t.name},
                             {"dtype", "f64"},
                             {"shape", Json::array({t.value.rows(), t.value.cols()})},
                             {"offset", offset},
                             {"length", length}});
        offset += align8(length);
    }
    meta["tensors"] = table;
    const std::string text = meta.dump();

    std::string out(kMagic, sizeof(kMagic));
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint64_t>(out, text.size());
    out += text;
    out.resize(align8(out.size()), '\0');
    out.reserve(out.size() + offset);
    for (const auto& t : file.tensors) {
        for (double v : t.value.data()) {
            put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
        }
    }
    return out;
}

CheckpointFile decode_checkpoint(std::string_view bytes) {
    if (bytes.size() < sizeof(kMagic)) {
        fail(CheckpointErrorKind::truncated, "file shorter than the magic bytes");
    }
    if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        fail(CheckpointErrorKind::bad_magic, "file does not start with MLRS");
    }
    if (bytes.size() < kHeaderSize) {
        fail(CheckpointErrorKind::truncated, "header is incomplete");
    }
    const auto version = get_le<std::uint32_t>(bytes, 4);
    if (version != kCheckpointVersion) {
        fail(CheckpointErrorKind::version_mismatch, "format version " + std::to_string(version) +
                                                        ", this build reads version " +
                                                        std::to_string(kCheckpointVersion));
    }
    const auto meta_len = get_le<std::uint64_t>(bytes, 8);
    if (meta_len > bytes.size() - kHeaderSize) {
        fail(CheckpointErrorKind::truncated, "metadata length exceeds file size");
    }
    CheckpointFile file;
    try {
        file.metadata = Json::parse(bytes.substr(kHeaderSize, meta_len));
    } catch (const Json::exception& e) {
        fail(CheckpointErrorKind::malformed, std::string("metadata is not valid JSON: ") + e.what());
    }
    if (!file.metadata.is_object() || !file.metadata.contains("tensors") || !file.metadata["tensors"].is_array()) {
        fail(CheckpointErrorKind::malformed, "metadata lacks a tensor table");
    }
    const std::size_t payload_start = align8(kHeaderSize + meta_len);
    const std::string_view payload =
        payload_start <= bytes.size() ? bytes.substr(payload_start) : std::string_view{};
    const Json table = file.metadata["tensors"];
    file.metadata.erase("tensors");
    std::unordered_set<std::string> names;
    for (std::size_t i = 0; i < table.size(); ++i) {
        Matrix value = read_tensor(payload, table[i], i);
        std::string name = table[i]["name"].get<std::string>();
        if (!names.insert(name).second) {
            fail(CheckpointErrorKind::malformed, "duplicate tensor name '" + name + "'");
        }
        file.tensors.push_back({std::move(name), std::move(value)});
    }
    return file;
}

void write_checkpoint_file(const std::filesystem::path& path, const CheckpointFile& file) {
    try {
        util::write_file_atomic(path, encode_checkpoint(file));
    } catch (const std::filesystem::filesystem_error& e) {
        fail(CheckpointErrorKind::io, e.what());
    } catch (const std::runtime_error& e) {
        fail(CheckpointErrorKind::io, e.what());
    }
}

CheckpointFile read_checkpoint_file(const std::filesystem::path& path) {
    std::string bytes;
    try {
        bytes = util::read_file(path);
    } catch (const std::runtime_error& e) {
        fail(CheckpointErrorKind::io, e.what());
    }
    return decode_checkpoint(bytes);
}

CheckpointFile model_to_checkpoint(const nn::Model& model, const CheckpointInfo& info) {
    CheckpointFile file;
    Json meta = Json::object();
    meta["format"] = "lrsl";
    meta["kind"] = "model";
    meta["model"] = to_json(model.config());
    meta["adapter"] = model.adapter_config() ? to_json(*model.adapter_config()) : Json(nullptr);
    Json layers = Json::array();
    for (const auto* lin : model.linears()) {
        if (lin->adapted) {
            layers.push_back(Json{{"name", lin->name}, {"scaling", lin->adapted->scaling()}});
        }
    }
    meta["adapted_layers"] = layers;
    file.metadata = info_json(std::move(meta), info);
    for (const auto& p : model.parameters()) {
        file.tensors.push_back({p.name, p.tensor.value()});
    }
    return file;
}

nn::Model model_from_checkpoint(const CheckpointFile& file, CheckpointInfo* info) {
    require_kind(file, "model");
    const auto& meta = file.metadata;
    nn::Model model(parse_section<nn::TransformerConfig>(meta, "model", parse_transformer_config));
    if (meta.contains("adapter") && !meta["adapter"].is_null()) {
        adapters::attach_adapter_slots(model,
                                       parse_section<adapters::AdapterConfig>(meta, "adapter", parse_adapter_config));
    }
    std::unordered_map<std::string, nn::Tensor> slots;
    for (auto& p : model.parameters()) {
        slots.emplace(p.name, p.tensor);
    }
    std::unordered_set<std::string> filled;
    for (const auto& t : file.tensors) {
        auto it = slots.find(t.name);
        if (it == slots.end()) {
            fail(CheckpointErrorKind::unknown_tensor, "tensor '" + t.name + "' does not exist in the model");
        }
        Matrix& dst = it->second.mutable_value();
        if (dst.rows() != t.value.rows() || dst.cols() != t.value.cols()) {
            fail(CheckpointErrorKind::shape_mismatch, "tensor '" + t.name + "' is " + t.value.shape_string() +
                                                          ", the model expects " + dst.shape_string());
        }
        dst = t.value;
        filled.insert(t.name);
    }
    for (const auto& p : model.parameters()) {
        if (!filled.contains(p.name)) {
            fail(CheckpointErrorKind::missing_tensor, "checkpoint has no tensor '" + p.name + "'");
        }
    }
    read_info(meta, info);
    return model;
}

void save_checkpoint(const nn::Model& model, const std::filesystem::path& path, const CheckpointInfo& info) {
    write_checkpoint_file(path, model_to_checkpoint(model, info));
}

nn::Model load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info) {
    return model_from_checkpoint(read_checkpoint_file(path), info);
}

AdapterExport export_adapters(const nn::Model& model) {
    if (!model.adapter_config()) {
        throw ConfigError("export_adapters: model carries no adapters");
    }
    AdapterExport out{model.config(), *model.adapter_config(), {}};
    for (const auto* lin : model.linears()) {
        if (lin->adapted) {
            out.layers.push_back({lin->name, lin->adapted->scaling(), lin->adapted->a().value(),
                                  lin->adapted->b().value()});
        }
    }
    return out;
}

CheckpointFile adapters_to_checkpoint(const AdapterExport& exported, const CheckpointInfo& info) {
    CheckpointFile file;
    Json meta = Json::object();
    meta["format"] = "lrsl";
    meta["kind"] = "adapters";
    meta["model"] = to_json(exported.model_config);
    meta["adapter"] = to_json(exported.config);
    Json layers = Json::array();
    for (const auto& layer : exported.layers) {
        layers.push_back(Json{{"name", layer.name}, {"scaling", layer.scaling}});
        file.tensors.push_back({layer.name + ".lora_a", layer.a});
        file.tensors.push_back({layer.name + ".lora_b", layer.b});
    }
    meta["adapted_layers"] = layers;
    file.metadata = info_json(std::move(meta), info);
    return file;
}

AdapterExport adapters_from_checkpoint(const CheckpointFile& file) {
    require_kind(file, "adapters");
    const auto& meta = file.metadata;
    AdapterExport out;
    out.model_config = parse_section<nn::TransformerConfig>(meta, "model", parse_transformer_config);
    out.config = parse_section<adapters::AdapterConfig>(meta, "adapter", parse_adapter_config);
    if (!meta.contains("adapted_layers") || !meta["adapted_layers"].is_array()) {
        fail(CheckpointErrorKind::malformed, "metadata lacks 'adapted_layers'");
    }
    std::unordered_set<std::string> claimed;
    for (const auto& entry : meta["adapted_layers"]) {
        if (!entry.is_object() || !entry.contains("name") || !entry["name"].is_string() ||
            !entry.contains("scaling") || !entry["scaling"].is_number()) {
            fail(CheckpointErrorKind::malformed, "adapted_layers entry " + entry.dump() + " lacks name or scaling");
        }
        AdapterLayer layer;
        layer.name = entry["name"].get<std::string>();
        layer.scaling = entry["scaling"].get<double>();
        const auto* a = file.find(layer.name + ".lora_a");
        const auto* b = file.find(layer.name + ".lora_b");
        if (a == nullptr || b == nullptr) {
            fail(CheckpointErrorKind::missing_tensor, "factors of layer '" + layer.name + "' are missing");
        }
        if (a->value.rows() != out.config.rank || b->value.cols() != out.config.rank) {
            fail(CheckpointErrorKind::shape_mismatch, "factors of layer '" + layer.name + "' do not have rank " +
                                                          std::to_string(out.config.rank));
        }
        layer.a = a->value;
        layer.b = b->value;
        claimed.insert(a->name);
        claimed.insert(b->name);
        out.layers.push_back(std::move(layer));
    }
    for (const auto& t : file.tensors) {
        if (!claimed.contains(t.name)) {
            fail(CheckpointErrorKind::unknown_tensor, "tensor '" + t.name + "' belongs to no listed layer");
        }
    }
    return out;
}

void save_adapters(const nn::Model& model, const std::filesystem::path& path, const CheckpointInfo& info) {
    write_checkpoint_file(path, adapters_to_checkpoint(export_adapters(model), info));
}

AdapterExport load_adapters(const std::filesystem::path& path) {
    return adapters_from_checkpoint(read_checkpoint_file(path));
}

nn::Model reassemble(const nn::Model& base, const AdapterExport& exported) {
    if (base.adapter_config()) {
        throw ConfigError("reassemble: base model already carries adapters");
    }
    if (!(base.config() == exported.model_config)) {
        throw ConfigError("reassemble: adapter file was built for a different model configuration");
    }
    for (const auto& layer : exported.layers) {
        const auto* lin = base.find_linear(layer.name);
        if (lin == nullptr) {
            fail(CheckpointErrorKind::unknown_tensor, "adapter layer '" + layer.name + "' does not exist in the base");
        }
        if (!exported.config.placement.contains(lin->placement)) {
            fail(CheckpointErrorKind::unknown_tensor,
                 "adapter layer '" + layer.name + "' is outside the configured placement");
        }
    }
    nn::Model model = base.clone();
    adapters::apply_adapters(model, exported.config);
    if (model.adapted_count() != exported.layers.size()) {
        fail(CheckpointErrorKind::missing_tensor, "adapter file covers " + std::to_string(exported.layers.size()) +
                                                      " layers, the configuration adapts " +
                                                      std::to_string(model.adapted_count()));
    }
    for (const auto& layer : exported.layers) {
        auto& ad = *model.find_linear(layer.name)->adapted;
        if (ad.a().value().rows() != layer.a.rows() || ad.a().value().cols() != layer.a.cols() ||
            ad.b().value().rows() != layer.b.rows() || ad.b().value().cols() != layer.b.cols()) {
            fail(CheckpointErrorKind::shape_mismatch, "factors of layer '" + layer.name + "' do not fit the base");
        }
        if (ad.scaling() != layer.scaling) {
            throw ConfigError("reassemble: scaling of layer '" + layer.name + "' disagrees with the adapter config");
        }
        ad.a().mutable_value() = layer.a;
        ad.b().mutable_value() = layer.b;
    }
    return model;
}

} // namespace lrsl::trainer
