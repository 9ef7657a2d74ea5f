#include "lrsl/cli/experiment.hpp"

#include "lrsl/adapters/spectral.hpp"
#include "lrsl/analysis/report.hpp"
#include "lrsl/trainer/checkpoint.hpp"
#include "lrsl/trainer/evaluation.hpp"
#include "lrsl/trainer/train.hpp"
#include "lrsl/util/csv.hpp"

#include <exception>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

namespace lrsl::cli {

namespace fs = std::filesystem;
using trainer::Json;

namespace {

std::string join_problems(const std::vector<std::string>& problems) {
    std::string msg = "invalid configuration:";
    for (const auto& p : problems) {
        msg += "\n  - " + p;
    }
    return msg;
}

PhaseConfig parse_phase(const Json& j, const std::string& path, std::vector<std::string>& errors) {
    PhaseConfig phase;
    trainer::StrictObject obj(j, path, errors);
    if (const Json* t = obj.find("task")) {
        phase.task = trainer::parse_task_spec(*t, path + ".task", errors);
    } else if (obj.ok()) {
        obj.fail("task", "missing");
    }
    if (const Json* t = obj.find("train")) {
        phase.train = trainer::parse_train_config(*t, path + ".train", errors);
    }
    obj.finish();
    return phase;
}

void check_phase(const PhaseConfig& phase, const nn::TransformerConfig& model, const std::string& path,
                 std::vector<std::string>& errors) {
    trainer::collect_validation(phase.task, path + ".task", errors);
    trainer::collect_validation(phase.train, path + ".train", errors);
    if (phase.task.vocab_size != model.vocab_size) {
        errors.push_back(path + ".task.vocab_size: " + std::to_string(phase.task.vocab_size) +
                         " differs from model.vocab_size " + std::to_string(model.vocab_size));
    }
    const std::size_t needed = phase.task.example_length() - 1;
    if (needed > phase.train.max_seq_len) {
        errors.push_back(path + ".train.max_seq_len: examples need " + std::to_string(needed) + " positions");
    }
    if (phase.train.max_seq_len > model.max_seq_len) {
        errors.push_back(path + ".train.max_seq_len: exceeds model.max_seq_len " + std::to_string(model.max_seq_len));
    }
}

std::vector<std::vector<int>> corpus_of(std::span<const trainer::Example> examples) {
    std::vector<std::vector<int>> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) {
        out.push_back(trainer::to_training_pair(ex).inputs);
    }
    return out;
}

struct SchemeJob {
    const ExperimentConfig* cfg;
    const SchemeEntry* entry;
    const nn::Model* base;
    const trainer::Dataset* pretrain_data;
    const trainer::Dataset* finetune_data;
};

SchemeOutcome run_scheme(const SchemeJob& job, std::ostream& log) {
    const auto& cfg = *job.cfg;
    const fs::path dir = cfg.output_dir / job.entry->name;
    fs::create_directories(dir);

    nn::Model model = job.base->clone();
    const auto res = trainer::finetune(model, job.entry->adapter, job.finetune_data->train, cfg.finetune.train);

    SchemeOutcome out;
    out.name = job.entry->name;
    out.adapter = job.entry->adapter;
    out.trainable = res.trainable;
    out.total = res.total;
    out.final_loss = res.log.empty() ? 0.0 : res.log.back().loss;
    out.finetune_em = trainer::evaluate_exact_match(model, job.finetune_data->eval);
    out.pretrain_em = trainer::evaluate_exact_match(model, job.pretrain_data->eval);

    trainer::CheckpointInfo info;
    info.step = cfg.finetune.train.total_steps;
    info.metrics = {{"final_loss", out.final_loss}, {"finetune_em", out.finetune_em}, {"pretrain_em", out.pretrain_em}};
    util::write_file_atomic(dir / "metrics.csv", trainer::metrics_csv(res.log));
    trainer::save_checkpoint(model, dir / "final.ckpt", info);
    trainer::save_adapters(model, dir / "adapters.ckpt", info);

    const std::size_t r = cfg.analyses.rank == 0 ? job.entry->adapter.rank : cfg.analyses.rank;
    const std::uint64_t seed = job.entry->adapter.seed;
    if (cfg.analyses.similarity) {
        const auto sweep = analysis::similarity_sweep(*job.base, model, r, seed);
        analysis::emit_similarity(sweep, dir);
        out.zero_update = sweep.zero_update;
    }
    if (cfg.analyses.projection) {
        std::vector<analysis::ProjectionRow> rows;
        const auto delta_source = analysis::delta_source_for(job.entry->adapter.scheme);
        for (const auto& layer : analysis::compared_layers(*job.base, model)) {
            for (auto source : {analysis::BasisSource::w, analysis::BasisSource::random, delta_source}) {
                rows.push_back({layer.layer_index, layer.module,
                                analysis::projection_analysis(layer.base, layer.finetuned, r, source,
                                                              adapters::layer_seed(seed, layer.name))});
            }
        }
        analysis::emit_projection(rows, dir / "projection.csv");
    }
    if (cfg.analyses.forgetting) {
        out.forgetting = analysis::forgetting_loss(*job.base, model, corpus_of(job.pretrain_data->eval));
    }
    std::ostringstream line;
    line << "[" << out.name << "] loss " << out.final_loss << "  finetune EM " << out.finetune_em << "  pretrain EM "
         << out.pretrain_em;
    if (out.forgetting) {
        line << "  forgetting " << out.forgetting->loss << " (base entropy " << out.forgetting->base_entropy << ")";
    }
    log << line.str() << "\n";
    return out;
}

} // namespace

ConfigViolations::ConfigViolations(std::vector<std::string> problems)
    : ConfigError(join_problems(problems)), problems_(std::move(problems)) {}

ExperimentConfig parse_experiment_config(const Json& j) {
    std::vector<std::string> errors;
    ExperimentConfig cfg;
    trainer::StrictObject root(j, "config", errors);
    if (const Json* m = root.find("model")) {
        cfg.model = trainer::parse_transformer_config(*m, "model", errors);
    }
    bool have_pretrain = false;
    bool have_finetune = false;
    if (const Json* p = root.find("pretrain")) {
        have_pretrain = true;
        cfg.pretrain = parse_phase(*p, "pretrain", errors);
    } else if (root.ok()) {
        root.fail("pretrain", "missing");
    }
    if (const Json* f = root.find("finetune")) {
        have_finetune = true;
        cfg.finetune = parse_phase(*f, "finetune", errors);
    } else if (root.ok()) {
        root.fail("finetune", "missing");
    }
    if (const Json* s = root.find("schemes")) {
        if (!s->is_array()) {
            root.fail("schemes", "expected an array");
        } else {
            for (std::size_t i = 0; i < s->size(); ++i) {
                const std::string path = "schemes[" + std::to_string(i) + "]";
                Json entry = (*s)[i];
                SchemeEntry scheme;
                if (entry.is_object() && entry.contains("name")) {
                    if (entry["name"].is_string() && !entry["name"].get<std::string>().empty()) {
                        scheme.name = entry["name"].get<std::string>();
                    } else {
                        errors.push_back(path + ".name: expected a non-empty string");
                    }
                    entry.erase("name");
                }
                const std::size_t before = errors.size();
                scheme.adapter = trainer::parse_adapter_config(entry, path, errors);
                // A scheme that failed to parse gets no default name, so it
                // cannot trigger a spurious duplicate report.
                if (scheme.name.empty() && errors.size() == before) {
                    scheme.name = std::string(adapters::to_string(scheme.adapter.scheme));
                }
                cfg.schemes.push_back(std::move(scheme));
            }
        }
    }
    if (const Json* a = root.find("analyses")) {
        trainer::StrictObject obj(*a, "analyses", errors);
        obj.read("similarity", cfg.analyses.similarity);
        obj.read("projection", cfg.analyses.projection);
        obj.read("forgetting", cfg.analyses.forgetting);
        obj.read("rank", cfg.analyses.rank);
        obj.finish();
    }
    std::string out_dir;
    root.read("output_dir", out_dir);
    cfg.output_dir = out_dir;
    root.finish();
    if (root.ok() && out_dir.empty()) {
        errors.push_back("config.output_dir: required");
    }

    trainer::collect_validation(cfg.model, "model", errors);
    if (have_pretrain) {
        check_phase(cfg.pretrain, cfg.model, "pretrain", errors);
    }
    if (have_finetune) {
        check_phase(cfg.finetune, cfg.model, "finetune", errors);
    }
    if (root.ok() && cfg.schemes.empty()) {
        errors.push_back("config.schemes: at least one scheme is required");
    }
    std::set<std::string> names;
    const std::size_t min_dim = std::min(cfg.model.d_model, cfg.model.d_ff);
    for (std::size_t i = 0; i < cfg.schemes.size(); ++i) {
        const std::string path = "schemes[" + std::to_string(i) + "]";
        const auto& s = cfg.schemes[i];
        trainer::collect_validation(s.adapter, path, errors);
        if (!s.name.empty() && !names.insert(s.name).second) {
            errors.push_back(path + ".name: duplicate scheme directory '" + s.name + "'");
        }
        if (s.name == "pretrain" || s.name.find('/') != std::string::npos || s.name == "." || s.name == "..") {
            errors.push_back(path + ".name: '" + s.name + "' cannot be used as a directory name");
        }
        if (s.adapter.rank > min_dim) {
            errors.push_back(path + ".rank: rank-too-large: " + std::to_string(s.adapter.rank) +
                             " exceeds the smallest adapted dimension " + std::to_string(min_dim));
        }
    }
    if (cfg.analyses.rank > min_dim) {
        errors.push_back("analyses.rank: rank-too-large: " + std::to_string(cfg.analyses.rank) +
                         " exceeds the smallest adapted dimension " + std::to_string(min_dim));
    }
    if (!errors.empty()) {
        throw ConfigViolations(std::move(errors));
    }
    return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigViolations({"cannot read config file " + path.string()});
    }
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::exception& e) {
        throw ConfigViolations({path.string() + ": not valid JSON: " + e.what()});
    }
    return parse_experiment_config(j);
}

Json to_json(const ExperimentConfig& cfg) {
    Json schemes = Json::array();
    for (const auto& s : cfg.schemes) {
        Json e = trainer::to_json(s.adapter);
        e["name"] = s.name;
        schemes.push_back(e);
    }
    return Json{{"model", trainer::to_json(cfg.model)},
                {"pretrain", {{"task", trainer::to_json(cfg.pretrain.task)}, {"train", trainer::to_json(cfg.pretrain.train)}}},
                {"finetune", {{"task", trainer::to_json(cfg.finetune.task)}, {"train", trainer::to_json(cfg.finetune.train)}}},
                {"schemes", schemes},
                {"analyses",
                 {{"similarity", cfg.analyses.similarity},
                  {"projection", cfg.analyses.projection},
                  {"forgetting", cfg.analyses.forgetting},
                  {"rank", cfg.analyses.rank}}},
                {"output_dir", cfg.output_dir.string()}};
}

void override_seeds(ExperimentConfig& cfg, std::uint64_t seed) {
    cfg.model.seed = seed;
    for (PhaseConfig* phase : {&cfg.pretrain, &cfg.finetune}) {
        phase->task.seed = seed;
        phase->train.seed = seed;
    }
    for (auto& s : cfg.schemes) {
        s.adapter.seed = seed;
    }
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, bool parallel, std::ostream& log) {
    std::error_code ec;
    fs::create_directories(cfg.output_dir / "pretrain", ec);
    if (ec) {
        throw ConfigError("output_dir " + cfg.output_dir.string() + " cannot be created: " + ec.message());
    }
    const auto pretrain_data = trainer::generate_task(cfg.pretrain.task);
    const auto finetune_data = trainer::generate_task(cfg.finetune.task);

    nn::Model base(cfg.model);
    const auto pre = trainer::train(base, pretrain_data.train, cfg.pretrain.train);
    ExperimentResult result;
    result.pretrain_final_loss = pre.log.empty() ? 0.0 : pre.log.back().loss;
    result.pretrain_em = trainer::evaluate_exact_match(base, pretrain_data.eval);
    trainer::CheckpointInfo info;
    info.step = cfg.pretrain.train.total_steps;
    info.metrics = {{"final_loss", result.pretrain_final_loss}, {"pretrain_em", result.pretrain_em}};
    util::write_file_atomic(cfg.output_dir / "pretrain" / "metrics.csv", trainer::metrics_csv(pre.log));
    trainer::save_checkpoint(base, cfg.output_dir / "pretrain" / "final.ckpt", info);
    log << "[pretrain] loss " << result.pretrain_final_loss << "  EM " << result.pretrain_em << "\n";

    result.schemes.resize(cfg.schemes.size());
    if (parallel && cfg.schemes.size() > 1) {
        std::vector<std::ostringstream> logs(cfg.schemes.size());
        std::vector<std::exception_ptr> errors(cfg.schemes.size());
        std::vector<std::thread> threads;
        for (std::size_t i = 0; i < cfg.schemes.size(); ++i) {
            threads.emplace_back([&, i] {
                try {
                    result.schemes[i] =
                        run_scheme({&cfg, &cfg.schemes[i], &base, &pretrain_data, &finetune_data}, logs[i]);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            });
        }
        for (auto& t : threads) {
            t.join();
        }
        for (std::size_t i = 0; i < cfg.schemes.size(); ++i) {
            log << logs[i].str();
        }
        for (const auto& e : errors) {
            if (e) {
                std::rethrow_exception(e);
            }
        }
    } else {
        for (std::size_t i = 0; i < cfg.schemes.size(); ++i) {
            result.schemes[i] = run_scheme({&cfg, &cfg.schemes[i], &base, &pretrain_data, &finetune_data}, log);
        }
    }

    std::vector<analysis::ForgettingRow> forgetting_rows;
    std::vector<util::CsvRow> rows;
    const std::string corpus = std::string(trainer::to_string(cfg.pretrain.task.kind)) + "_eval";
    for (const auto& s : result.schemes) {
        if (s.forgetting) {
            forgetting_rows.push_back({s.name, corpus, *s.forgetting});
        }
        rows.push_back({s.name, std::string(adapters::to_string(s.adapter.scheme)), std::to_string(s.adapter.rank),
                        std::to_string(s.trainable), std::to_string(s.total),
                        util::format_real(static_cast<double>(s.trainable) / static_cast<double>(s.total)),
                        util::format_real(s.final_loss), util::format_real(s.finetune_em),
                        util::format_real(s.pretrain_em),
                        s.forgetting ? util::format_real(s.forgetting->loss) : std::string(),
                        s.forgetting ? util::format_real(s.forgetting->base_entropy) : std::string()});
    }
    if (cfg.analyses.forgetting) {
        analysis::emit_forgetting(forgetting_rows, cfg.output_dir / "forgetting.csv");
    }
    util::write_file_atomic(cfg.output_dir / "results.csv",
                            util::to_csv({"name", "scheme", "rank", "trainable", "total", "trainable_fraction",
                                          "final_loss", "finetune_em", "pretrain_em", "forgetting_loss",
                                          "base_entropy"},
                                         rows));
    return result;
}

} // namespace lrsl::cli
