#include "lrsl/cli/cli.hpp"
#include "lrsl/cli/decompose.hpp"
#include "lrsl/cli/experiment.hpp"
#include "lrsl/analysis/report.hpp"
#include "lrsl/trainer/checkpoint.hpp"
#include "lrsl/trainer/train.hpp"
#include "lrsl/util/csv.hpp"

#include "oracles.hpp"
#include "test_models.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sstream>

using lrsl::linalg::Matrix;
namespace cli = lrsl::cli;
namespace nn = lrsl::nn;
namespace ad = lrsl::adapters;
namespace tr = lrsl::trainer;
namespace fs = std::filesystem;
using Json = tr::Json;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome lrsl_cmd(std::vector<std::string> args) {
    args.insert(args.begin(), "lrsl");
    std::ostringstream out;
    std::ostringstream err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "lrsl_cli_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

Json minimal_config(const fs::path& output_dir, std::size_t steps) {
    auto phase = [steps](const char* kind, std::uint64_t seed) {
        return Json{{"task",
                     {{"kind", kind}, {"vocab_size", 10}, {"seq_len", 3}, {"num_train", 128}, {"num_eval", 16},
                      {"seed", seed}}},
                    {"train",
                     {{"lr", 1e-3}, {"warmup_steps", 2}, {"total_steps", steps}, {"batch_size", 4},
                      {"max_seq_len", 10}, {"seed", seed}}}};
    };
    return Json{{"model",
                 {{"vocab_size", 10}, {"d_model", 16}, {"n_heads", 2}, {"n_layers", 2}, {"d_ff", 32},
                  {"max_seq_len", 10}, {"seed", 1}}},
                {"pretrain", phase("copy", 1)},
                {"finetune", phase("reverse", 2)},
                {"schemes",
                 Json::array({{{"scheme", "lora"}, {"rank", 2}},
                              {{"scheme", "pissa"}, {"rank", 2}, {"alpha", 2}},
                              {{"scheme", "milora"}, {"rank", 2}, {"alpha", 2}}})},
                {"output_dir", output_dir.string()}};
}

fs::path write_config(const fs::path& dir, const Json& cfg) {
    const fs::path p = dir / "config.json";
    lrsl::util::write_file_atomic(p, cfg.dump(2));
    return p;
}

std::string bytes_of(const fs::path& p) { return lrsl::util::read_file(p); }

nn::TransformerConfig model_config(std::uint64_t seed) {
    nn::TransformerConfig c;
    c.vocab_size = 10;
    c.d_model = 12;
    c.n_heads = 2;
    c.n_layers = 2;
    c.d_ff = 16;
    c.max_seq_len = 10;
    c.seed = seed;
    return c;
}

class ScopedEnv {
public:
    ScopedEnv(const char* name, const char* value) : name_(name) { setenv(name, value, 1); }
    ~ScopedEnv() { unsetenv(name_); }
    ScopedEnv(const ScopedEnv&) = delete;
    ScopedEnv& operator=(const ScopedEnv&) = delete;

private:
    const char* name_;
};

} // namespace

// ---------------------------------------------------------------- general

TEST(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(lrsl_cmd({}).code, 2);
    EXPECT_EQ(lrsl_cmd({"frobnicate"}).code, 2);
    EXPECT_EQ(lrsl_cmd({"decompose", "--rank", "2"}).code, 2);
    EXPECT_EQ(lrsl_cmd({"--help"}).code, 0);
    EXPECT_EQ(lrsl_cmd({"--version"}).out, std::string(cli::kVersion) + "\n");
}

TEST(Cli, Fnv1aKnownVectors) {
    EXPECT_EQ(cli::fnv1a_hex(""), "cbf29ce484222325");
    EXPECT_EQ(cli::fnv1a_hex("a"), "af63dc4c8601ec8c");
}

// ---------------------------------------------------------------- train

TEST(CliTrain, MinimalRunWritesLayout) {
    const auto dir = scratch("train_layout");
    const auto cfg = write_config(dir, minimal_config(dir / "out", 10));
    const auto res = lrsl_cmd({"train", "--config", cfg.string()});
    ASSERT_EQ(res.code, 0) << res.err;
    for (const char* sub : {"pretrain", "lora", "pissa", "milora"}) {
        EXPECT_TRUE(fs::exists(dir / "out" / sub / "final.ckpt")) << sub;
        EXPECT_TRUE(fs::exists(dir / "out" / sub / "metrics.csv")) << sub;
    }
    for (const char* f : {"results.csv", "forgetting.csv", "manifest.json", "lora/similarity.csv",
                          "milora/projection.csv", "pissa/adapters.ckpt"}) {
        EXPECT_TRUE(fs::exists(dir / "out" / f)) << f;
    }
    std::size_t scheme_dirs = 0;
    for (const auto& e : fs::directory_iterator(dir / "out")) {
        scheme_dirs += e.is_directory() && e.path().filename() != "pretrain";
    }
    EXPECT_EQ(scheme_dirs, 3u);

    const auto metrics = lrsl::util::parse_csv(bytes_of(dir / "out" / "milora" / "metrics.csv"));
    EXPECT_EQ(metrics.size(), 11u);
    const auto manifest = Json::parse(bytes_of(dir / "out" / "manifest.json"));
    for (const char* key : {"argv", "config_hash", "seeds", "version", "wall_time_seconds"}) {
        EXPECT_TRUE(manifest.contains(key)) << key;
    }
    EXPECT_EQ(manifest["seeds"]["model"], 1);
}

TEST(CliTrain, RerunIsBitIdenticalAndParallelMatches) {
    const auto dir = scratch("train_rerun");
    const auto cfg = write_config(dir, minimal_config(dir / "out", 10));
    ASSERT_EQ(lrsl_cmd({"train", "--config", cfg.string()}).code, 0);
    std::map<std::string, std::string> first;
    for (const auto& e : fs::recursive_directory_iterator(dir / "out")) {
        if (e.is_regular_file() && e.path().filename() != "manifest.json") {
            first[fs::relative(e.path(), dir / "out").string()] = bytes_of(e.path());
        }
    }
    ASSERT_GT(first.size(), 20u);
    for (const bool parallel : {false, true}) {
        std::vector<std::string> args{"train", "--config", cfg.string()};
        if (parallel) {
            args.emplace_back("--parallel");
        }
        ASSERT_EQ(lrsl_cmd(args).code, 0);
        for (const auto& [name, bytes] : first) {
            EXPECT_EQ(bytes_of(dir / "out" / name), bytes) << name << (parallel ? " (parallel)" : "");
        }
    }
}

TEST(CliTrain, ConfigListsEveryViolation) {
    const auto dir = scratch("train_bad");
    Json cfg = minimal_config(dir / "out", 10);
    cfg["model"]["d_modle"] = 16;
    cfg["schemes"][0]["scheme"] = "lorra";
    cfg["pretrain"]["train"]["lr"] = -1.0;
    cfg["finetune"]["task"]["vocab_size"] = 12;
    const auto res = lrsl_cmd({"train", "--config", write_config(dir, cfg).string()});
    EXPECT_EQ(res.code, 2);
    for (const char* needle : {"d_modle", "lorra", "pretrain.train", "finetune.task.vocab_size"}) {
        EXPECT_NE(res.err.find(needle), std::string::npos) << needle << "\n" << res.err;
    }
    EXPECT_FALSE(fs::exists(dir / "out"));

    try {
        cli::parse_experiment_config(cfg);
        FAIL() << "expected ConfigViolations";
    } catch (const cli::ConfigViolations& e) {
        EXPECT_EQ(e.problems().size(), 4u) << e.what();
    }
}

TEST(CliTrain, RejectsEmptySchemesAndDuplicateNames) {
    const auto dir = scratch("train_schemes");
    Json cfg = minimal_config(dir / "out", 2);
    cfg["schemes"] = Json::array();
    EXPECT_EQ(lrsl_cmd({"train", "--config", write_config(dir, cfg).string()}).code, 2);
    cfg["schemes"] = Json::array({{{"scheme", "lora"}, {"rank", 2}}, {{"scheme", "lora"}, {"rank", 4}}});
    const auto dup = lrsl_cmd({"train", "--config", write_config(dir, cfg).string()});
    EXPECT_EQ(dup.code, 2);
    EXPECT_NE(dup.err.find("duplicate"), std::string::npos);
    cfg["schemes"][1]["name"] = "lora_r4";
    EXPECT_NO_THROW(cli::parse_experiment_config(cfg));
    EXPECT_EQ(lrsl_cmd({"train", "--config", (dir / "missing.json").string()}).code, 2);
}

TEST(CliTrain, UncreatableOutputDirExitsTwo) {
    const auto dir = scratch("train_uncreatable");
    lrsl::util::write_file_atomic(dir / "blocker", "x");
    const auto res = lrsl_cmd({"train", "--config", write_config(dir, minimal_config(dir / "blocker" / "out", 2)).string()});
    EXPECT_EQ(res.code, 2) << res.err;
}

TEST(CliTrain, SeedEnvironmentOverride) {
    const auto dir = scratch("train_env");
    const auto cfg = write_config(dir, minimal_config(dir / "out", 2));
    {
        ScopedEnv env("LRSL_SEED", "77");
        ASSERT_EQ(lrsl_cmd({"train", "--config", cfg.string()}).code, 0);
    }
    const auto manifest = Json::parse(bytes_of(dir / "out" / "manifest.json"));
    EXPECT_EQ(manifest["seeds"]["model"], 77);
    EXPECT_EQ(manifest["seeds"]["scheme.milora"], 77);
    {
        const auto model = tr::load_checkpoint(dir / "out" / "pretrain" / "final.ckpt");
        EXPECT_EQ(model.config().seed, 77u);
    }
    ScopedEnv bad("LRSL_SEED", "12x");
    const auto res = lrsl_cmd({"train", "--config", cfg.string()});
    EXPECT_EQ(res.code, 2);
    EXPECT_NE(res.err.find("LRSL_SEED"), std::string::npos);
}

// ---------------------------------------------------------------- decompose

TEST(CliDecompose, ReassemblesWithinTolerance) {
    const auto dir = scratch("decompose");
    const nn::Model model(model_config(3));
    tr::save_checkpoint(model, dir / "base.ckpt");
    for (const char* mode : {"minor", "principal", "random"}) {
        const fs::path out = dir / mode;
        const auto res = lrsl_cmd({"decompose", "--input", (dir / "base.ckpt").string(), "--rank", "3", "--mode",
                                   mode, "--seed", "9", "--output", out.string()});
        ASSERT_EQ(res.code, 0) << res.err;
        EXPECT_TRUE(fs::exists(out / "manifest.json"));
        std::size_t files = 0;
        for (const nn::Linear* lin : model.linears()) {
            if (!nn::is_block_projection(lin->placement)) {
                continue;
            }
            const auto split = cli::load_split(out / cli::split_file_name(lin->name));
            EXPECT_EQ(split.layer, lin->name);
            EXPECT_EQ(split.kept_indices.size(), 3u);
            const Matrix& w = lin->weight.value();
            const Matrix back = oracle::naive_matmul(split.b, split.a);
            double worst = 0.0;
            for (std::size_t i = 0; i < w.rows(); ++i) {
                for (std::size_t j = 0; j < w.cols(); ++j) {
                    worst = std::max(worst, std::abs(split.w_p(i, j) + back(i, j) - w(i, j)));
                }
            }
            EXPECT_LE(worst, 1e-10) << lin->name << " " << mode;
            ++files;
        }
        EXPECT_EQ(files, 14u);
    }
}

TEST(CliDecompose, SummaryMatchesGramOracle) {
    const auto dir = scratch("decompose_summary");
    const nn::Model model(model_config(4));
    tr::save_checkpoint(model, dir / "base.ckpt");
    const std::size_t r = 4;
    ASSERT_EQ(lrsl_cmd({"decompose", "--input", (dir / "base.ckpt").string(), "--rank", std::to_string(r),
                        "--mode", "minor", "--output", (dir / "out").string()})
                  .code,
              0);
    const auto rows = lrsl::util::parse_csv(bytes_of(dir / "out" / "split_summary.csv"));
    ASSERT_EQ(rows.size(), 15u);
    ASSERT_EQ(rows[0][0], "layer");
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        const Matrix& w = model.find_linear(row[0])->weight.value();
        const auto sigma = oracle::gram_singular_values(w);
        const std::size_t k = sigma.size();
        const double scale = sigma.front();
        EXPECT_NEAR(lrsl::util::parse_real(row[7]), sigma[k - r], 1e-9 * scale) << row[0];
        EXPECT_NEAR(lrsl::util::parse_real(row[8]), sigma[k - 1], 1e-9 * scale) << row[0];
        EXPECT_NEAR(lrsl::util::parse_real(row[9]), sigma[0], 1e-9 * scale) << row[0];
        EXPECT_EQ(row[6], std::to_string(k - 4) + ";" + std::to_string(k - 3) + ";" + std::to_string(k - 2) + ";" +
                              std::to_string(k - 1));
    }
}

TEST(CliDecompose, ErrorExitCodes) {
    const auto dir = scratch("decompose_errors");
    tr::save_checkpoint(nn::Model(model_config(5)), dir / "base.ckpt");
    const auto too_big = lrsl_cmd({"decompose", "--input", (dir / "base.ckpt").string(), "--rank", "13",
                                   "--output", (dir / "out").string()});
    EXPECT_EQ(too_big.code, 2);
    EXPECT_NE(too_big.err.find("rank-too-large"), std::string::npos);
    EXPECT_FALSE(fs::exists(dir / "out"));

    const auto bad_mode = lrsl_cmd({"decompose", "--input", (dir / "base.ckpt").string(), "--rank", "2", "--mode",
                                    "middle", "--output", (dir / "out").string()});
    EXPECT_EQ(bad_mode.code, 2);

    std::string bytes = bytes_of(dir / "base.ckpt");
    bytes[0] = 'X';
    lrsl::util::write_file_atomic(dir / "corrupt.ckpt", bytes);
    const auto corrupt = lrsl_cmd({"decompose", "--input", (dir / "corrupt.ckpt").string(), "--rank", "2",
                                   "--output", (dir / "out").string()});
    EXPECT_EQ(corrupt.code, 3);
    EXPECT_NE(corrupt.err.find("bad-magic"), std::string::npos);
}

// ---------------------------------------------------------------- analyze

TEST(CliAnalyze, IdenticalModelsFlagZeroUpdate) {
    const auto dir = scratch("analyze_zero");
    tr::save_checkpoint(nn::Model(model_config(6)), dir / "base.ckpt");
    const auto res = lrsl_cmd({"analyze", "--base", (dir / "base.ckpt").string(), "--finetuned",
                               (dir / "base.ckpt").string(), "--rank", "2", "--kind", "similarity", "--output",
                               (dir / "out").string()});
    ASSERT_EQ(res.code, 0) << res.err;
    EXPECT_NE(res.out.find("zero-update: true"), std::string::npos);
    const auto summary = Json::parse(bytes_of(dir / "out" / "similarity_summary.json"));
    EXPECT_TRUE(summary["zero_update"].get<bool>());
    EXPECT_EQ(summary["unchanged_layers"].size(), 14u);
    EXPECT_EQ(lrsl::util::parse_csv(bytes_of(dir / "out" / "similarity.csv")).size(), 1u);
    EXPECT_TRUE(fs::exists(dir / "out" / "manifest.json"));
}

TEST(CliAnalyze, ProjectionMatchesConstructedUpdate) {
    const auto dir = scratch("analyze_projection");
    const nn::Model base(model_config(7));
    const std::size_t r = 3;
    const nn::Model tuned = test_models::bottom_update_model(base, r);
    tr::save_checkpoint(base, dir / "base.ckpt");
    tr::save_checkpoint(tuned, dir / "tuned.ckpt");
    const auto res = lrsl_cmd({"analyze", "--base", (dir / "base.ckpt").string(), "--finetuned",
                               (dir / "tuned.ckpt").string(), "--rank", std::to_string(r), "--kind", "projection",
                               "--output", (dir / "out").string()});
    ASSERT_EQ(res.code, 0) << res.err;
    const auto rows = lrsl::analysis::parse_projection_csv(bytes_of(dir / "out" / "projection.csv"));
    ASSERT_EQ(rows.size(), 14u * 3u);

    // Oracle: the update spans the bottom r pairs of W with weights 0.5 + i,
    // so the ratio is sqrt(sum c_i^2) / sqrt(sum sigma_bottom_i^2).
    std::vector<double> expected;
    for (const nn::Linear* lin : base.linears()) {
        if (!nn::is_block_projection(lin->placement)) {
            continue;
        }
        const auto sigma = oracle::gram_singular_values(lin->weight.value());
        double num = 0.0;
        double den = 0.0;
        for (std::size_t i = 0; i < r; ++i) {
            num += (0.5 + static_cast<double>(i)) * (0.5 + static_cast<double>(i));
            den += sigma[sigma.size() - 1 - i] * sigma[sigma.size() - 1 - i];
        }
        expected.push_back(std::sqrt(num) / std::sqrt(den));
    }
    std::size_t checked = 0;
    for (const auto& row : rows) {
        if (row.report.basis_source != lrsl::analysis::BasisSource::delta_full) {
            continue;
        }
        ASSERT_TRUE(row.report.amplification.has_value());
        EXPECT_NEAR(*row.report.amplification, expected[checked], 1e-8 * expected[checked]);
        ++checked;
    }
    EXPECT_EQ(checked, 14u);
    EXPECT_NE(res.out.find("zero-update: false"), std::string::npos);
}

TEST(CliAnalyze, ForgettingAgainstItselfHitsEntropy) {
    const auto dir = scratch("analyze_forgetting");
    tr::save_checkpoint(nn::Model(model_config(8)), dir / "base.ckpt");
    const std::string corpus = R"({"kind": "copy", "vocab_size": 10, "seq_len": 3, "num_train": 32, "num_eval": 32, "seed": 4})";
    const auto res = lrsl_cmd({"analyze", "--base", (dir / "base.ckpt").string(), "--finetuned",
                               (dir / "base.ckpt").string(), "--kind", "forgetting", "--corpus", corpus, "--output",
                               (dir / "out").string()});
    ASSERT_EQ(res.code, 0) << res.err;
    const auto rows = lrsl::analysis::parse_forgetting_csv(bytes_of(dir / "out" / "forgetting.csv"));
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].scheme, "full");
    EXPECT_LE(std::abs(rows[0].result.loss - rows[0].result.base_entropy), 1e-12);

    lrsl::util::write_file_atomic(dir / "corpus.json", corpus);
    EXPECT_EQ(lrsl_cmd({"analyze", "--base", (dir / "base.ckpt").string(), "--finetuned",
                        (dir / "base.ckpt").string(), "--kind", "forgetting", "--corpus",
                        (dir / "corpus.json").string(), "--output", (dir / "out2").string()})
                  .code,
              0);
}

TEST(CliAnalyze, ErrorExitCodes) {
    const auto dir = scratch("analyze_errors");
    tr::save_checkpoint(nn::Model(model_config(9)), dir / "base.ckpt");
    auto other = model_config(9);
    other.d_model = 8;
    tr::save_checkpoint(nn::Model(other), dir / "other.ckpt");
    const std::string base = (dir / "base.ckpt").string();

    const auto no_corpus = lrsl_cmd({"analyze", "--base", base, "--finetuned", base, "--kind", "forgetting"});
    EXPECT_EQ(no_corpus.code, 2);
    EXPECT_NE(no_corpus.err.find("--corpus"), std::string::npos);
    EXPECT_EQ(lrsl_cmd({"analyze", "--base", base, "--finetuned", base, "--kind", "spectra", "--rank", "2"}).code, 2);
    EXPECT_EQ(lrsl_cmd({"analyze", "--base", base, "--finetuned", base, "--kind", "similarity", "--rank", "99",
                        "--output", (dir / "o").string()})
                  .code,
              2);
    const auto mismatch = lrsl_cmd({"analyze", "--base", base, "--finetuned", (dir / "other.ckpt").string(),
                                    "--kind", "similarity", "--rank", "2", "--output", (dir / "o").string()});
    EXPECT_EQ(mismatch.code, 3);
    const auto bad_corpus = lrsl_cmd({"analyze", "--base", base, "--finetuned", base, "--kind", "forgetting",
                                      "--corpus", R"({"kind": "copy", "vocab_size": 10, "seq_lenn": 3})"});
    EXPECT_EQ(bad_corpus.code, 2);
    EXPECT_NE(bad_corpus.err.find("seq_lenn"), std::string::npos);
}

// ---------------------------------------------------------------- init / merge

TEST(CliMerge, FreshMiloraMergesBackToBase) {
    const auto dir = scratch("merge_fresh");
    const nn::Model base(model_config(10));
    tr::save_checkpoint(base, dir / "base.ckpt");
    const auto init = lrsl_cmd({"init", "--base", (dir / "base.ckpt").string(), "--scheme", "milora", "--rank", "3",
                                "--adapters-only", "--seed", "5", "--output", (dir / "ad.ckpt").string()});
    ASSERT_EQ(init.code, 0) << init.err;
    const auto merge = lrsl_cmd({"merge", "--base", (dir / "base.ckpt").string(), "--adapters",
                                 (dir / "ad.ckpt").string(), "--output", (dir / "merged.ckpt").string()});
    ASSERT_EQ(merge.code, 0) << merge.err;
    EXPECT_NE(merge.out.find("max merge residual"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir / "manifest.json"));

    const nn::Model merged = tr::load_checkpoint(dir / "merged.ckpt");
    EXPECT_EQ(merged.adapted_count(), 0u);
    const auto pb = base.parameters();
    const auto pm = merged.parameters();
    ASSERT_EQ(pb.size(), pm.size());
    for (std::size_t i = 0; i < pb.size(); ++i) {
        ASSERT_EQ(pb[i].name, pm[i].name);
        double worst = 0.0;
        const auto& x = pb[i].tensor.value();
        const auto& y = pm[i].tensor.value();
        for (std::size_t k = 0; k < x.size(); ++k) {
            worst = std::max(worst, std::abs(x.data()[k] - y.data()[k]));
        }
        EXPECT_LE(worst, 1e-10) << pb[i].name;
    }
}

TEST(CliMerge, TrainedAdaptersMatchAdaptedForward) {
    const auto dir = scratch("merge_trained");
    const nn::Model base(model_config(11));
    tr::save_checkpoint(base, dir / "base.ckpt");
    nn::Model tuned = base.clone();
    ad::AdapterConfig acfg;
    acfg.scheme = ad::Scheme::lora;
    acfg.rank = 2;
    acfg.alpha = 4.0;
    acfg.seed = 2;
    tr::TaskSpec spec;
    spec.kind = tr::TaskKind::reverse;
    spec.seq_len = 3;
    spec.num_train = 64;
    spec.num_eval = 8;
    tr::TrainConfig tcfg;
    tcfg.lr = 1e-2;
    tcfg.warmup_steps = 2;
    tcfg.total_steps = 20;
    tcfg.batch_size = 4;
    tcfg.max_seq_len = 10;
    tr::finetune(tuned, acfg, tr::generate_task(spec).train, tcfg);
    tr::save_adapters(tuned, dir / "ad.ckpt");

    ASSERT_EQ(lrsl_cmd({"merge", "--base", (dir / "base.ckpt").string(), "--adapters", (dir / "ad.ckpt").string(),
                        "--output", (dir / "merged.ckpt").string()})
                  .code,
              0);
    const nn::Model merged = tr::load_checkpoint(dir / "merged.ckpt");
    for (std::uint64_t probe = 0; probe < 10; ++probe) {
        const auto seq = test_models::random_sequence(merged.config(), 6, probe).first;
        const Matrix a = tuned.logits(seq);
        const Matrix b = merged.logits(seq);
        for (std::size_t k = 0; k < a.size(); ++k) {
            EXPECT_LE(std::abs(a.data()[k] - b.data()[k]), 1e-8);
        }
    }
}

TEST(CliMerge, UnknownLayerExitsThree) {
    const auto dir = scratch("merge_unknown");
    const nn::Model base(model_config(12));
    tr::save_checkpoint(base, dir / "base.ckpt");
    nn::Model tuned = base.clone();
    ad::AdapterConfig acfg;
    acfg.rank = 2;
    acfg.alpha = 2.0;
    ad::apply_adapters(tuned, acfg);
    auto exported = tr::export_adapters(tuned);
    exported.layers[0].name = "blocks.5.attn.query";
    tr::write_checkpoint_file(dir / "ad.ckpt", tr::adapters_to_checkpoint(exported));
    const auto res = lrsl_cmd({"merge", "--base", (dir / "base.ckpt").string(), "--adapters",
                               (dir / "ad.ckpt").string(), "--output", (dir / "merged.ckpt").string()});
    EXPECT_EQ(res.code, 3);
    EXPECT_NE(res.err.find("unknown-tensor"), std::string::npos);
    EXPECT_FALSE(fs::exists(dir / "merged.ckpt"));
}

TEST(CliInit, FreshModelFromConfigIsDeterministic) {
    const auto dir = scratch("init_fresh");
    const auto cfg = write_config(dir, minimal_config(dir / "out", 2));
    ASSERT_EQ(lrsl_cmd({"init", "--config", cfg.string(), "--output", (dir / "a.ckpt").string()}).code, 0);
    ASSERT_EQ(lrsl_cmd({"init", "--config", cfg.string(), "--output", (dir / "b.ckpt").string()}).code, 0);
    EXPECT_EQ(bytes_of(dir / "a.ckpt"), bytes_of(dir / "b.ckpt"));
    ASSERT_EQ(lrsl_cmd({"init", "--config", cfg.string(), "--seed", "2", "--output", (dir / "c.ckpt").string()}).code,
              0);
    EXPECT_NE(bytes_of(dir / "a.ckpt"), bytes_of(dir / "c.ckpt"));
    EXPECT_EQ(lrsl_cmd({"init", "--output", (dir / "d.ckpt").string()}).code, 2);
    EXPECT_EQ(lrsl_cmd({"init", "--base", (dir / "a.ckpt").string(), "--scheme", "pissa", "--rank", "2", "--alpha",
                        "3", "--output", (dir / "e.ckpt").string()})
                  .code,
              2);
}
