#include "lrsl/adapters/spectral.hpp"
#include "lrsl/analysis/report.hpp"
#include "lrsl/trainer/tasks.hpp"
#include "lrsl/trainer/train.hpp"
#include "lrsl/util/csv.hpp"

#include "oracles.hpp"
#include "test_models.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>

using lrsl::linalg::Matrix;
using namespace lrsl::analysis;
namespace nn = lrsl::nn;
namespace ad = lrsl::adapters;
namespace fs = std::filesystem;

namespace {

nn::TransformerConfig sweep_config(std::uint64_t seed) {
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

Matrix block_diag_left(std::size_t first) {
    Matrix m(4, 4);
    m(first, first) = 3.0;
    m(first + 1, first + 1) = 2.0;
    return m;
}

} // namespace

// ---------------------------------------------------------------- phi

TEST(Similarity, SelfSimilarityIsOne) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Matrix w = oracle::random_matrix(9, 7, seed);
        for (std::size_t r : {1u, 3u, 7u}) {
            EXPECT_NEAR(subspace_similarity(w, w, r), 1.0, 1e-10);
        }
    }
}

TEST(Similarity, DisjointSubspacesGiveZero) {
    EXPECT_NEAR(subspace_similarity(block_diag_left(0), block_diag_left(2), 2), 0.0, 1e-15);
}

TEST(Similarity, MatchesProjectorOracle) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Matrix a = oracle::random_matrix(12, 12, 100 + seed);
        const Matrix b = oracle::random_matrix(12, 12, 200 + seed);
        const double expected =
            oracle::projector_similarity(oracle::top_left_subspace(a, 3), oracle::top_left_subspace(b, 3));
        EXPECT_NEAR(subspace_similarity(a, b, 3), expected, 1e-10);
    }
}

TEST(Similarity, RejectsBadRank) {
    const Matrix a = oracle::random_matrix(6, 4, 1);
    EXPECT_THROW(subspace_similarity(a, a, 5), lrsl::RankTooLargeError);
    EXPECT_THROW(subspace_similarity(a, a, 0), lrsl::RankTooLargeError);
    EXPECT_THROW(subspace_similarity(a, oracle::random_matrix(5, 4, 2), 1), lrsl::DimensionError);
}

TEST(Similarity, BoundsSymmetryAndRotationInvariance) {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<std::size_t> dim(8, 32);
    const std::size_t ranks[] = {1, 2, 4, 8};
    for (int i = 0; i < 200; ++i) {
        const std::size_t rows = dim(rng);
        const std::size_t c1 = dim(rng);
        const std::size_t c2 = dim(rng);
        const std::size_t r = ranks[i % 4];
        const Matrix a = oracle::random_matrix(rows, c1, 5000 + i);
        const Matrix b = oracle::random_matrix(rows, c2, 7000 + i);
        const double ab = subspace_similarity(a, b, r);
        const double ba = subspace_similarity(b, a, r);
        EXPECT_GE(ab, 0.0);
        EXPECT_LE(ab, 1.0 + 1e-12);
        EXPECT_NEAR(ab, ba, 1e-12);
        const Matrix a_rot = oracle::naive_matmul(a, oracle::random_orthogonal(c1, 9000 + i));
        EXPECT_NEAR(subspace_similarity(a_rot, b, r), ab, 1e-9) << "pair " << i;
    }
}

// ---------------------------------------------------------------- projection

TEST(Projection, ReferenceAmplificationRatios) {
    struct Row {
        double delta_norm, w_norm, expected;
    };
    const Row rows[] = {
        {68.18, 1.82, 37.46}, {55.79, 17.57, 3.18}, {44.95, 1.86, 24.17}, // Table 4
        {77.02, 1.32, 58.35}, {74.34, 6.98, 10.65}, {56.61, 1.29, 43.88}, // Table 9
    };
    for (const auto& row : rows) {
        EXPECT_NEAR(amplification_ratio(row.delta_norm, row.w_norm), row.expected, 0.02);
    }
    EXPECT_THROW(amplification_ratio(1.0, 0.0), std::domain_error);
}

TEST(Projection, AlignedUpdate) {
    const Matrix w = oracle::random_matrix(6, 6, 3);
    const double c = 2.5;
    const auto rep = projection_analysis(w, w * (1.0 + c), 6, BasisSource::delta_milora);
    EXPECT_NEAR(rep.proj_w_norm, rep.w_norm, 1e-10 * rep.w_norm);
    EXPECT_NEAR(rep.w_norm, oracle::flat_norm(w), 1e-12);
    ASSERT_TRUE(rep.amplification);
    EXPECT_NEAR(*rep.amplification, c, 1e-10);
    EXPECT_FALSE(rep.zero_update);
}

TEST(Projection, MatchesDenseOracle) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Matrix w = oracle::random_matrix(10, 10, 40 + seed);
        const Matrix ft = w + oracle::random_matrix(10, 10, 60 + seed, -0.3, 0.3);
        Matrix delta = ft;
        delta -= w;
        const auto rep = projection_analysis(w, ft, 2, BasisSource::delta_lora);
        EXPECT_NEAR(rep.w_norm, oracle::flat_norm(w), 1e-10);
        EXPECT_NEAR(rep.proj_w_norm, oracle::dense_projection_norm(delta, w, 2), 1e-10);
        ASSERT_TRUE(rep.proj_delta_norm);
        EXPECT_NEAR(*rep.proj_delta_norm, oracle::dense_projection_norm(delta, delta, 2), 1e-10);
        EXPECT_NEAR(*rep.amplification, *rep.proj_delta_norm / rep.proj_w_norm, 1e-12);

        const auto wrep = projection_analysis(w, ft, 2, BasisSource::w);
        EXPECT_NEAR(wrep.proj_w_norm, oracle::dense_projection_norm(w, w, 2), 1e-10);
        EXPECT_NEAR(*wrep.proj_delta_norm, oracle::dense_projection_norm(w, delta, 2), 1e-10);

        const auto rrep = projection_analysis(w, ft, 2, BasisSource::random, 77 + seed);
        const Matrix g = oracle::gaussian_like_library(10, 10, 77 + seed);
        EXPECT_NEAR(rrep.proj_w_norm, oracle::dense_projection_norm(g, w, 2), 1e-10);
    }
}

TEST(Projection, ConstructedBottomUpdate) {
    const Matrix w = oracle::random_matrix(8, 6, 12);
    const auto svd = oracle::eigen_svd(w);
    const Eigen::MatrixXd delta = 4.0 * svd.u.col(5) * svd.v.col(5).transpose() +
                                  3.0 * svd.u.col(4) * svd.v.col(4).transpose();
    const auto rep = projection_analysis(w, w + oracle::from_eigen(delta), 2, BasisSource::delta_milora);
    const double proj_w = std::hypot(svd.sigma(4), svd.sigma(5));
    EXPECT_NEAR(rep.proj_w_norm, proj_w, 1e-10);
    EXPECT_NEAR(*rep.proj_delta_norm, 5.0, 1e-10);
    EXPECT_NEAR(*rep.amplification, 5.0 / proj_w, 1e-9);
}

TEST(Projection, ZeroUpdateIsFlagged) {
    const Matrix w = oracle::random_matrix(5, 5, 1);
    const auto rep = projection_analysis(w, w, 2, BasisSource::delta_pissa);
    EXPECT_TRUE(rep.zero_update);
    EXPECT_FALSE(rep.proj_delta_norm);
    EXPECT_FALSE(rep.amplification);
    const auto wrep = projection_analysis(w, w, 2, BasisSource::w);
    EXPECT_TRUE(wrep.zero_update);
    EXPECT_GT(wrep.proj_w_norm, 0.0);
    EXPECT_FALSE(wrep.amplification);
}

TEST(Projection, ShapeAndRankErrors) {
    EXPECT_THROW(projection_analysis(Matrix(3, 3), Matrix(3, 4), 1, BasisSource::w), lrsl::DimensionError);
    EXPECT_THROW(projection_analysis(Matrix(3, 4), Matrix(3, 4), 4, BasisSource::w), lrsl::RankTooLargeError);
}

// ---------------------------------------------------------------- sweep

TEST(Sweep, IdenticalModelsFlagZeroUpdate) {
    const nn::Model base(sweep_config(1));
    const auto sweep = similarity_sweep(base, base.clone(), 2);
    EXPECT_TRUE(sweep.zero_update);
    EXPECT_TRUE(sweep.records.empty());
    EXPECT_EQ(sweep.unchanged_layers.size(), 14u);
}

TEST(Sweep, ConstructedBottomUpdate) {
    const nn::Model base(sweep_config(2));
    const std::size_t r = 3;
    const auto sweep = similarity_sweep(base, test_models::bottom_update_model(base, r), r);
    ASSERT_FALSE(sweep.zero_update);
    ASSERT_EQ(sweep.records.size(), 14u * 3u);
    for (const auto& rec : sweep.records) {
        if (rec.target == SimilarityTarget::bottom) {
            EXPECT_GE(rec.phi, 1.0 - 1e-9);
        } else if (rec.target == SimilarityTarget::top) {
            EXPECT_LE(rec.phi, 1e-9);
        } else {
            EXPECT_GE(rec.phi, 0.0);
            EXPECT_LE(rec.phi, 1.0 + 1e-12);
        }
    }
}

TEST(Sweep, MeansAverageRecordValues) {
    const nn::Model base(sweep_config(3));
    nn::Model ft = base.clone();
    test_models::perturb_parameters(ft, 5, 0.05);
    const auto sweep = similarity_sweep(base, ft, 2, 11);
    std::map<std::pair<std::size_t, SimilarityTarget>, std::vector<double>> by_layer;
    std::map<std::pair<nn::Placement, SimilarityTarget>, std::vector<double>> by_module;
    for (const auto& rec : sweep.records) {
        by_layer[{rec.layer_index, rec.target}].push_back(rec.phi);
        by_module[{rec.module, rec.target}].push_back(rec.phi);
    }
    ASSERT_EQ(sweep.layer_means.size(), by_layer.size());
    ASSERT_EQ(sweep.module_means.size(), by_module.size());
    EXPECT_EQ(sweep.layer_means.size(), 2u * 3u);
    EXPECT_EQ(sweep.module_means.size(), 7u * 3u);
    for (const auto& m : sweep.layer_means) {
        const auto& v = by_layer.at({m.layer_index, m.target});
        double s = 0.0;
        for (double x : v) {
            s += x;
        }
        EXPECT_NEAR(m.mean_phi, s / static_cast<double>(v.size()), 1e-15);
        EXPECT_EQ(m.count, 7u);
    }
    for (const auto& m : sweep.module_means) {
        EXPECT_EQ(m.count, 2u);
    }
}

TEST(Sweep, AdaptedCardinalityAndDeterminism) {
    const nn::Model base(sweep_config(4));
    nn::Model ft = base.clone();
    ad::AdapterConfig cfg;
    cfg.scheme = ad::Scheme::milora;
    cfg.rank = 2;
    cfg.alpha = 2;
    lrsl::trainer::TaskSpec spec;
    spec.vocab_size = 10;
    spec.seq_len = 3;
    spec.num_train = 64;
    spec.num_eval = 8;
    lrsl::trainer::TrainConfig tc;
    tc.lr = 1e-2;
    tc.warmup_steps = 0;
    tc.total_steps = 10;
    tc.batch_size = 4;
    tc.max_seq_len = 10;
    lrsl::trainer::finetune(ft, cfg, lrsl::trainer::generate_task(spec).train, tc);
    const auto sweep = similarity_sweep(base, ft, 2, 1);
    EXPECT_EQ(sweep.records.size(), ft.adapted_count() * 3);
    const auto again = similarity_sweep(base, ft, 2, 1);
    EXPECT_EQ(similarity_csv(sweep.records), similarity_csv(again.records));
}

TEST(Sweep, StructureMismatch) {
    const nn::Model a(sweep_config(1));
    auto cfg = sweep_config(1);
    cfg.d_ff = 20;
    const nn::Model b(cfg);
    EXPECT_THROW(similarity_sweep(a, b, 2), StructureMismatchError);
    EXPECT_THROW(similarity_sweep(a, a.clone(), 13), lrsl::RankTooLargeError);
}

// ---------------------------------------------------------------- forgetting

TEST(Forgetting, HandComputedToyDistributions) {
    const Matrix base_logits{{std::log(0.8), std::log(0.2)}};
    const Matrix ft_logits{{0.0, 0.0}};
    const auto res = forgetting_from_logits(base_logits, ft_logits);
    EXPECT_NEAR(res.loss, std::log(2.0), 1e-15);
    EXPECT_NEAR(res.base_entropy, -(0.8 * std::log(0.8) + 0.2 * std::log(0.2)), 1e-15);
}

TEST(Forgetting, EqualityWhenUnchanged) {
    const nn::Model base(sweep_config(5));
    const auto corpus = std::vector<std::vector<int>>{{1, 2, 3, 9, 1, 2}, {4, 4, 0, 9}, {7}};
    const auto res = forgetting_loss(base, base.clone(), corpus);
    EXPECT_LE(std::abs(res.loss - res.base_entropy), 1e-12);
    EXPECT_EQ(res.positions, 11u);
}

TEST(Forgetting, ShiftedRowRaisesLoss) {
    Matrix base_logits = oracle::random_matrix(5, 6, 8, -2.0, 2.0);
    Matrix ft_logits = base_logits;
    ft_logits(2, 0) += 1.5;
    const auto res = forgetting_from_logits(base_logits, ft_logits);
    EXPECT_GT(res.loss, res.base_entropy);
}

TEST(Forgetting, GibbsFloorOnPerturbedModels) {
    const nn::Model base(sweep_config(6));
    const auto corpus = std::vector<std::vector<int>>{{1, 2, 3, 9, 1, 2, 3}, {5, 6, 9, 5, 6}};
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        nn::Model ft = base.clone();
        test_models::perturb_parameters(ft, seed, 0.1);
        const auto res = forgetting_loss(base, ft, corpus);
        EXPECT_GE(res.loss, res.base_entropy - 1e-12);
    }
}

TEST(Forgetting, Errors) {
    const nn::Model base(sweep_config(7));
    auto cfg = sweep_config(7);
    cfg.vocab_size = 12;
    const nn::Model other(cfg);
    const std::vector<std::vector<int>> corpus{{1, 2}};
    EXPECT_THROW(forgetting_loss(base, other, corpus), StructureMismatchError);
    EXPECT_THROW(forgetting_loss(base, base, std::span<const std::vector<int>>{}), std::invalid_argument);
}

// ---------------------------------------------------------------- reports

TEST(Report, EmptyInputsGiveHeaderOnly) {
    EXPECT_EQ(similarity_csv({}), "layer,module,target,r,phi\n");
    EXPECT_EQ(projection_csv({}),
              "layer,module,basis_source,r,w_norm,proj_w_norm,proj_delta_norm,amplification\n");
    EXPECT_EQ(forgetting_csv({}), "scheme,corpus,loss,base_entropy\n");
}

TEST(Report, RoundTripsValues) {
    const nn::Model base(sweep_config(8));
    nn::Model ft = base.clone();
    test_models::perturb_parameters(ft, 1, 0.05);
    const auto sweep = similarity_sweep(base, ft, 2, 3);
    const auto parsed = parse_similarity_csv(similarity_csv(sweep.records));
    ASSERT_EQ(parsed.size(), sweep.records.size());
    for (std::size_t i = 0; i < parsed.size(); ++i) {
        EXPECT_EQ(parsed[i].phi, sweep.records[i].phi);
        EXPECT_EQ(parsed[i].layer_index, sweep.records[i].layer_index);
        EXPECT_EQ(parsed[i].module, sweep.records[i].module);
        EXPECT_EQ(parsed[i].target, sweep.records[i].target);
    }

    const Matrix w = oracle::random_matrix(6, 6, 2);
    std::vector<ProjectionRow> rows{{0, nn::Placement::query, projection_analysis(w, w * 1.1, 2, BasisSource::delta_lora)},
                                    {1, nn::Placement::mlp_up, projection_analysis(w, w, 2, BasisSource::delta_lora)}};
    const auto prows = parse_projection_csv(projection_csv(rows));
    ASSERT_EQ(prows.size(), 2u);
    EXPECT_EQ(prows[0].report.proj_w_norm, rows[0].report.proj_w_norm);
    EXPECT_EQ(*prows[0].report.amplification, *rows[0].report.amplification);
    EXPECT_FALSE(prows[1].report.amplification);

    const std::vector<ForgettingRow> f{{"milora", "copy_eval", {0.1234567890123456789, 0.1, 3}}};
    const auto frows = parse_forgetting_csv(forgetting_csv(f));
    EXPECT_EQ(frows[0].result.loss, f[0].result.loss);
    EXPECT_EQ(frows[0].scheme, "milora");
}

TEST(Report, EmitsFilesWithCardinality) {
    const auto dir = fs::temp_directory_path() / "lrsl_analysis_report";
    fs::remove_all(dir);
    const nn::Model base(sweep_config(9));
    const auto sweep = similarity_sweep(base, test_models::bottom_update_model(base, 2), 2);
    emit_similarity(sweep, dir);
    const auto rows = lrsl::util::parse_csv(lrsl::util::read_file(dir / "similarity.csv"));
    EXPECT_EQ(rows.size(), 1u + 2u * 7u * 3u);
    EXPECT_TRUE(fs::exists(dir / "similarity_layer_mean.csv"));
    EXPECT_TRUE(fs::exists(dir / "similarity_module_mean.csv"));
}
