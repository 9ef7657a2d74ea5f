#include "lrsl/cli/cli.hpp"

#include "lrsl/analysis/projection.hpp"
#include "lrsl/analysis/report.hpp"
#include "lrsl/cli/decompose.hpp"
#include "lrsl/cli/experiment.hpp"
#include "lrsl/trainer/checkpoint.hpp"
#include "lrsl/util/csv.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace lrsl::cli {

namespace fs = std::filesystem;
using trainer::Json;

namespace {

/// Collects the audit trail of one command and writes manifest.json.
class Manifest {
public:
    Manifest(std::string command, const std::vector<std::string>& args)
        : command_(std::move(command)), args_(args), start_(std::chrono::steady_clock::now()),
          started_at_(std::chrono::system_clock::now()) {}

    void config(const Json& resolved) { config_hash_ = "fnv1a64:" + fnv1a_hex(resolved.dump()); }
    void seed(const std::string& name, std::uint64_t value) { seeds_[name] = value; }
    void output(const fs::path& p) { outputs_.push_back(p.string()); }

    void write(const fs::path& dir) const {
        const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        const std::time_t t = std::chrono::system_clock::to_time_t(started_at_);
        std::tm utc{};
        gmtime_r(&t, &utc);
        std::ostringstream stamp;
        stamp << std::put_time(&utc, "%Y-%m-%dT%H:%M:%SZ");
        Json j{{"command", command_},
               {"argv", args_},
               {"config_hash", config_hash_},
               {"seeds", seeds_},
               {"version", kVersion},
               {"started_at", stamp.str()},
               {"wall_time_seconds", elapsed},
               {"outputs", outputs_}};
        util::write_file_atomic(dir / "manifest.json", j.dump(2) + "\n");
    }

private:
    std::string command_;
    std::vector<std::string> args_;
    std::string config_hash_;
    std::map<std::string, std::uint64_t> seeds_;
    std::vector<std::string> outputs_;
    std::chrono::steady_clock::time_point start_;
    std::chrono::system_clock::time_point started_at_;
};

fs::path parent_or_current(const fs::path& file) {
    const fs::path parent = file.parent_path();
    return parent.empty() ? fs::path(".") : parent;
}

/// An explicit flag wins, then LRSL_SEED, then the flag's default.
std::uint64_t resolve_seed(const CLI::Option* flag, std::uint64_t value) {
    if (flag->count() > 0) {
        return value;
    }
    return seed_from_environment().value_or(value);
}

std::set<nn::Placement> parse_placement_list(const std::string& text) {
    std::set<nn::Placement> out;
    std::stringstream ss(text);
    std::string label;
    while (std::getline(ss, label, ',')) {
        const auto p = nn::parse_placement(label);
        if (!p) {
            throw ConfigError("unknown placement '" + label + "'");
        }
        out.insert(*p);
    }
    return out;
}

trainer::TaskSpec parse_corpus_spec(const std::string& spec) {
    Json j;
    try {
        if (!spec.empty() && spec.front() == '{') {
            j = Json::parse(spec);
        } else {
            std::ifstream in(spec);
            if (!in) {
                throw ConfigError("--corpus: cannot read " + spec);
            }
            j = Json::parse(in);
        }
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("--corpus: not valid JSON: ") + e.what());
    }
    std::vector<std::string> errors;
    auto task = trainer::parse_task_spec(j, "corpus", errors);
    if (errors.empty()) {
        trainer::collect_validation(task, "corpus", errors);
    }
    if (!errors.empty()) {
        throw ConfigViolations(std::move(errors));
    }
    return task;
}

std::string fixed(double v, int precision = 6) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(precision) << v;
    return s.str();
}

// ---- decompose ------------------------------------------------------------

struct DecomposeArgs {
    std::string input;
    std::size_t rank = 0;
    std::string mode = "minor";
    std::uint64_t seed = 0;
    std::string output;
    CLI::Option* seed_flag = nullptr;
};

int cmd_decompose(const DecomposeArgs& a, Manifest& manifest, std::ostream& out) {
    const auto mode = adapters::parse_split_mode(a.mode);
    if (!mode) {
        throw ConfigError("--mode: expected minor, principal or random, got '" + a.mode + "'");
    }
    const std::uint64_t seed = resolve_seed(a.seed_flag, a.seed);
    const nn::Model model = trainer::load_checkpoint(a.input);
    const fs::path dir = a.output;
    const auto rows = decompose_model(model, a.rank, *mode, seed, dir);
    util::write_file_atomic(dir / "split_summary.csv", split_summary_csv(rows));

    out << std::left << std::setw(22) << "layer" << std::setw(8) << "shape" << std::setw(14) << "kept"
        << std::setw(14) << "kept sigma max" << std::setw(14) << "kept sigma min" << "\n";
    for (const auto& r : rows) {
        const std::string shape = std::to_string(r.rows) + "x" + std::to_string(r.cols);
        const std::string kept = std::to_string(r.kept_indices.front()) + ".." + std::to_string(r.kept_indices.back());
        out << std::setw(22) << r.layer << std::setw(8) << shape << std::setw(14) << kept << std::setw(14)
            << fixed(r.kept_sigma_max) << std::setw(14) << fixed(r.kept_sigma_min) << "\n";
        manifest.output(dir / split_file_name(r.layer));
    }
    out << rows.size() << " layers split (" << a.mode << ", r = " << a.rank << ") into " << dir.string() << "\n";

    manifest.config(Json{{"input", a.input}, {"rank", a.rank}, {"mode", a.mode}, {"seed", seed}});
    manifest.seed("split", seed);
    manifest.output(dir / "split_summary.csv");
    manifest.write(dir);
    return ok;
}

// ---- init -----------------------------------------------------------------

struct InitArgs {
    std::string config;
    std::string base;
    std::string scheme;
    std::size_t rank = 4;
    std::optional<double> alpha;
    double dropout = 0.0;
    std::string placement;
    std::uint64_t seed = 0;
    bool adapters_only = false;
    std::string output;
    CLI::Option* seed_flag = nullptr;
};

int cmd_init(const InitArgs& a, Manifest& manifest, std::ostream& out) {
    const fs::path output = a.output;
    if (a.base.empty()) {
        if (a.config.empty()) {
            throw ConfigError("init: either --config (new model) or --base (adapters) is required");
        }
        if (!a.scheme.empty() || a.adapters_only) {
            throw ConfigError("init: --scheme and --adapters-only need --base");
        }
        ExperimentConfig cfg = load_experiment_config(a.config);
        if (auto s = seed_from_environment()) {
            cfg.model.seed = *s;
        }
        if (a.seed_flag->count() > 0) {
            cfg.model.seed = a.seed;
        }
        const nn::Model model(cfg.model);
        trainer::save_checkpoint(model, output);
        out << "initialized model with " << model.parameter_count() << " parameters -> " << output.string() << "\n";
        manifest.config(trainer::to_json(cfg.model));
        manifest.seed("model", cfg.model.seed);
    } else {
        if (!a.config.empty()) {
            throw ConfigError("init: --config and --base are mutually exclusive");
        }
        const auto scheme = adapters::parse_scheme(a.scheme);
        if (!scheme) {
            throw ConfigError("--scheme: expected lora, pissa, milora or random_components, got '" + a.scheme + "'");
        }
        adapters::AdapterConfig cfg;
        cfg.scheme = *scheme;
        cfg.rank = a.rank;
        cfg.alpha = a.alpha.value_or(*scheme == adapters::Scheme::lora ? 2.0 * static_cast<double>(a.rank)
                                                                       : static_cast<double>(a.rank));
        cfg.dropout = a.dropout;
        if (!a.placement.empty()) {
            cfg.placement = parse_placement_list(a.placement);
        }
        cfg.seed = resolve_seed(a.seed_flag, a.seed);
        cfg.validate();
        nn::Model model = trainer::load_checkpoint(a.base);
        if (model.adapted_count() > 0) {
            throw ConfigError("init: base checkpoint already carries adapters");
        }
        const auto summary = adapters::apply_adapters(model, cfg);
        if (a.adapters_only) {
            trainer::save_adapters(model, output);
        } else {
            trainer::save_checkpoint(model, output);
        }
        out << "initialized " << a.scheme << " adapters on " << summary.adapted_layers << " layers ("
            << summary.trainable << " trainable of " << summary.total << ") -> " << output.string() << "\n";
        manifest.config(Json{{"base", a.base}, {"adapter", trainer::to_json(cfg)}, {"adapters_only", a.adapters_only}});
        manifest.seed("adapter", cfg.seed);
    }
    manifest.output(output);
    manifest.write(parent_or_current(output));
    return ok;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
    std::string config;
    bool parallel = false;
};

int cmd_train(const TrainArgs& a, Manifest& manifest, std::ostream& out) {
    ExperimentConfig cfg = load_experiment_config(a.config);
    if (auto s = seed_from_environment()) {
        override_seeds(cfg, *s);
    }
    const auto result = run_experiment(cfg, a.parallel, out);

    out << "\n" << std::left << std::setw(20) << "scheme" << std::setw(12) << "trainable" << std::setw(12)
        << "final loss" << std::setw(12) << "target EM" << std::setw(12) << "source EM" << "forgetting\n";
    for (const auto& s : result.schemes) {
        out << std::setw(20) << s.name << std::setw(12) << s.trainable << std::setw(12) << fixed(s.final_loss, 4)
            << std::setw(12) << fixed(s.finetune_em, 4) << std::setw(12) << fixed(s.pretrain_em, 4)
            << (s.forgetting ? fixed(s.forgetting->loss, 6) : std::string("-")) << "\n";
        manifest.output(cfg.output_dir / s.name);
    }

    manifest.config(to_json(cfg));
    manifest.seed("model", cfg.model.seed);
    manifest.seed("pretrain.task", cfg.pretrain.task.seed);
    manifest.seed("pretrain.train", cfg.pretrain.train.seed);
    manifest.seed("finetune.task", cfg.finetune.task.seed);
    manifest.seed("finetune.train", cfg.finetune.train.seed);
    for (const auto& s : cfg.schemes) {
        manifest.seed("scheme." + s.name, s.adapter.seed);
    }
    manifest.output(cfg.output_dir / "pretrain");
    manifest.output(cfg.output_dir / "results.csv");
    manifest.write(cfg.output_dir);
    return ok;
}

// ---- analyze --------------------------------------------------------------

struct AnalyzeArgs {
    std::string base;
    std::string finetuned;
    std::size_t rank = 0;
    std::string kind;
    std::string corpus;
    std::string label;
    std::uint64_t seed = 0;
    std::string output = ".";
    CLI::Option* seed_flag = nullptr;
};

std::string scheme_label(const nn::Model& m) {
    return m.adapter_config() ? std::string(adapters::to_string(m.adapter_config()->scheme)) : std::string("full");
}

int cmd_analyze(const AnalyzeArgs& a, Manifest& manifest, std::ostream& out) {
    if (a.kind != "similarity" && a.kind != "projection" && a.kind != "forgetting") {
        throw ConfigError("--kind: expected similarity, projection or forgetting, got '" + a.kind + "'");
    }
    if (a.kind == "forgetting" && a.corpus.empty()) {
        throw ConfigError("--kind forgetting needs --corpus (a task spec JSON file or inline object)");
    }
    if (a.kind != "forgetting" && a.rank == 0) {
        throw ConfigError("--rank: required and positive for " + a.kind);
    }
    const std::uint64_t seed = resolve_seed(a.seed_flag, a.seed);
    const nn::Model base = trainer::load_checkpoint(a.base);
    const nn::Model finetuned = trainer::load_checkpoint(a.finetuned);
    const fs::path dir = a.output;
    fs::create_directories(dir);
    Json resolved{{"base", a.base}, {"finetuned", a.finetuned}, {"rank", a.rank}, {"kind", a.kind}, {"seed", seed}};

    if (a.kind == "similarity") {
        const auto sweep = analysis::similarity_sweep(base, finetuned, a.rank, seed);
        analysis::emit_similarity(sweep, dir);
        util::write_file_atomic(dir / "similarity_summary.json",
                                Json{{"zero_update", sweep.zero_update},
                                     {"unchanged_layers", sweep.unchanged_layers},
                                     {"rank", a.rank}}
                                        .dump(2) +
                                    "\n");
        out << "zero-update: " << (sweep.zero_update ? "true" : "false") << " (" << sweep.unchanged_layers.size()
            << " unchanged layers)\n";
        out << std::left << std::setw(10) << "module" << std::setw(16) << "target" << "mean phi\n";
        for (const auto& m : sweep.module_means) {
            out << std::setw(10) << nn::to_string(m.module) << std::setw(16) << analysis::to_string(m.target)
                << fixed(m.mean_phi) << "\n";
        }
        manifest.output(dir / "similarity.csv");
        manifest.output(dir / "similarity_summary.json");
    } else if (a.kind == "projection") {
        const auto delta_source =
            analysis::delta_source_for(finetuned.adapter_config()
                                           ? std::optional<adapters::Scheme>(finetuned.adapter_config()->scheme)
                                           : std::nullopt);
        std::vector<analysis::ProjectionRow> rows;
        bool zero = true;
        for (const auto& layer : analysis::compared_layers(base, finetuned)) {
            for (auto source : {analysis::BasisSource::w, analysis::BasisSource::random, delta_source}) {
                auto report = analysis::projection_analysis(layer.base, layer.finetuned, a.rank, source,
                                                            adapters::layer_seed(seed, layer.name));
                zero = zero && report.zero_update;
                rows.push_back({layer.layer_index, layer.module, report});
            }
        }
        analysis::emit_projection(rows, dir / "projection.csv");
        out << "zero-update: " << (zero ? "true" : "false") << "\n";
        out << std::left << std::setw(7) << "layer" << std::setw(10) << "module" << std::setw(12) << "basis"
            << std::setw(14) << "||U'WV||" << std::setw(14) << "||U'dWV||" << "amplification\n";
        for (const auto& r : rows) {
            out << std::setw(7) << r.layer_index << std::setw(10) << nn::to_string(r.module) << std::setw(12)
                << analysis::to_string(r.report.basis_source) << std::setw(14) << fixed(r.report.proj_w_norm)
                << std::setw(14) << (r.report.proj_delta_norm ? fixed(*r.report.proj_delta_norm) : "-")
                << (r.report.amplification ? fixed(*r.report.amplification, 4) : "-") << "\n";
        }
        manifest.output(dir / "projection.csv");
    } else {
        const auto task = parse_corpus_spec(a.corpus);
        const auto data = trainer::generate_task(task);
        std::vector<std::vector<int>> corpus;
        for (const auto& ex : data.eval) {
            corpus.push_back(trainer::to_training_pair(ex).inputs);
        }
        const auto res = analysis::forgetting_loss(base, finetuned, corpus);
        const std::string label = a.label.empty() ? scheme_label(finetuned) : a.label;
        const std::string corpus_name = std::string(trainer::to_string(task.kind)) + "_eval";
        analysis::emit_forgetting({{label, corpus_name, res}}, dir / "forgetting.csv");
        out << "forgetting loss " << fixed(res.loss, 12) << "  base entropy " << fixed(res.base_entropy, 12)
            << "  gap " << std::scientific << std::setprecision(3) << (res.loss - res.base_entropy) << "  over "
            << res.positions << " positions\n";
        resolved["corpus"] = trainer::to_json(task);
        manifest.output(dir / "forgetting.csv");
    }
    manifest.config(resolved);
    manifest.seed("analysis", seed);
    manifest.write(dir);
    return ok;
}

// ---- merge ----------------------------------------------------------------

struct MergeArgs {
    std::string base;
    std::string adapters;
    std::string output;
    std::size_t probes = 10;
    std::uint64_t seed = 0;
    CLI::Option* seed_flag = nullptr;
};

int cmd_merge(const MergeArgs& a, Manifest& manifest, std::ostream& out) {
    if (a.probes == 0) {
        throw ConfigError("--probes: must be positive");
    }
    const std::uint64_t seed = resolve_seed(a.seed_flag, a.seed);
    const nn::Model base = trainer::load_checkpoint(a.base);
    const auto exported = trainer::load_adapters(a.adapters);
    const nn::Model adapted = trainer::reassemble(base, exported);
    nn::Model merged = adapted.clone();
    merged.merge_adapters();

    double worst = 0.0;
    out << std::left << std::setw(22) << "layer" << "max |adapted - merged|\n";
    for (const nn::Linear* lin : adapted.linears()) {
        if (!lin->adapted) {
            continue;
        }
        const auto probes =
            linalg::Matrix::gaussian(a.probes, lin->in_features(), 1.0, adapters::layer_seed(seed, lin->name));
        const auto via_adapter = lin->adapted->forward(nn::Tensor::constant(probes)).value();
        const auto via_merged = linalg::matmul_nt(probes, merged.find_linear(lin->name)->weight.value());
        const double residual = linalg::max_abs_diff(via_adapter, via_merged);
        worst = std::max(worst, residual);
        out << std::setw(22) << lin->name << std::scientific << std::setprecision(3) << residual << "\n"
            << std::defaultfloat;
    }
    out << "max merge residual: " << std::scientific << std::setprecision(3) << worst << std::defaultfloat << "\n";

    trainer::save_checkpoint(merged, a.output);
    out << "merged " << exported.layers.size() << " layers -> " << a.output << "\n";

    manifest.config(Json{{"base", a.base}, {"adapters", a.adapters}, {"probes", a.probes}, {"seed", seed}});
    manifest.seed("probes", seed);
    manifest.output(a.output);
    manifest.write(parent_or_current(a.output));
    return ok;
}

} // namespace

std::optional<std::uint64_t> seed_from_environment() {
    const char* raw = std::getenv("LRSL_SEED");
    if (raw == nullptr) {
        return std::nullopt;
    }
    const std::string text(raw);
    std::uint64_t value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
        throw ConfigError("LRSL_SEED: expected a non-negative decimal integer, got '" + text + "'");
    }
    return value;
}

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << h;
    return s.str();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Low-rank adaptation experiments on a tiny transformer", "lrsl"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    DecomposeArgs dec;
    auto* c_dec = app.add_subcommand("decompose", "Split every block projection of a checkpoint");
    c_dec->add_option("--input", dec.input, "Model checkpoint")->required();
    c_dec->add_option("--rank", dec.rank, "Components moved into the adapter factors")->required();
    c_dec->add_option("--mode", dec.mode, "minor, principal or random")->capture_default_str();
    dec.seed_flag = c_dec->add_option("--seed", dec.seed, "Seed for random mode");
    c_dec->add_option("--output", dec.output, "Output directory")->required();

    InitArgs ini;
    auto* c_init = app.add_subcommand("init", "Create a fresh model, or attach initialized adapters to one");
    c_init->add_option("--config", ini.config, "Experiment config (uses its model section)");
    c_init->add_option("--base", ini.base, "Base checkpoint to attach adapters to");
    c_init->add_option("--scheme", ini.scheme, "lora, pissa, milora or random_components");
    c_init->add_option("--rank", ini.rank)->capture_default_str();
    c_init->add_option("--alpha", ini.alpha, "Defaults to 2r for lora and r otherwise");
    c_init->add_option("--dropout", ini.dropout)->capture_default_str();
    c_init->add_option("--placement", ini.placement, "Comma-separated projection labels");
    ini.seed_flag = c_init->add_option("--seed", ini.seed);
    c_init->add_flag("--adapters-only", ini.adapters_only, "Write only the adapter factors");
    c_init->add_option("--output", ini.output)->required();

    TrainArgs trn;
    auto* c_train = app.add_subcommand("train", "Pretrain, then finetune once per scheme and analyze");
    c_train->add_option("--config", trn.config, "Experiment config (JSON)")->required();
    c_train->add_flag("--parallel", trn.parallel, "Run schemes on separate threads");

    AnalyzeArgs ana;
    auto* c_ana = app.add_subcommand("analyze", "Compare a finetuned checkpoint against its base");
    c_ana->add_option("--base", ana.base)->required();
    c_ana->add_option("--finetuned", ana.finetuned)->required();
    c_ana->add_option("--rank", ana.rank);
    c_ana->add_option("--kind", ana.kind, "similarity, projection or forgetting")->required();
    c_ana->add_option("--corpus", ana.corpus, "Task spec JSON (file or inline) for forgetting");
    c_ana->add_option("--label", ana.label, "Scheme label for the forgetting row");
    ana.seed_flag = c_ana->add_option("--seed", ana.seed, "Seed for random bases");
    c_ana->add_option("--output", ana.output, "Output directory")->capture_default_str();

    MergeArgs mrg;
    auto* c_merge = app.add_subcommand("merge", "Fold exported adapters into a base checkpoint");
    c_merge->add_option("--base", mrg.base)->required();
    c_merge->add_option("--adapters", mrg.adapters)->required();
    c_merge->add_option("--output", mrg.output)->required();
    c_merge->add_option("--probes", mrg.probes, "Probe inputs per layer")->capture_default_str();
    mrg.seed_flag = c_merge->add_option("--seed", mrg.seed, "Seed for probe inputs");

    // CLI11 consumes arguments from the back.
    std::vector<std::string> reversed;
    if (!args.empty()) {
        reversed.assign(args.rbegin(), args.rend() - 1);
    }
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return ok;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << "\n";
        return ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return invalid_input;
    }

    try {
        if (c_dec->parsed()) {
            Manifest m("decompose", args);
            return cmd_decompose(dec, m, out);
        }
        if (c_init->parsed()) {
            Manifest m("init", args);
            return cmd_init(ini, m, out);
        }
        if (c_train->parsed()) {
            Manifest m("train", args);
            return cmd_train(trn, m, out);
        }
        if (c_ana->parsed()) {
            Manifest m("analyze", args);
            return cmd_analyze(ana, m, out);
        }
        Manifest m("merge", args);
        return cmd_merge(mrg, m, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return invalid_input;
    } catch (const DataIntegrityError& e) {
        err << "error: " << e.what() << "\n";
        return data_integrity;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return runtime_failure;
    }
}

} // namespace lrsl::cli
