#include "lrsl/nn/gradcheck.hpp"
#include "lrsl/nn/ops.hpp"
#include "lrsl/nn/transformer.hpp"

#include "oracles.hpp"
#include "test_models.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

using lrsl::linalg::Matrix;
using namespace lrsl::nn;

TEST(Forward, SingleTokenGivesOneRow) {
    const Model model(test_models::tiny_config(1));
    const std::vector<int> tokens{3};
    const Matrix logits = model.logits(tokens);
    EXPECT_EQ(logits.rows(), 1u);
    EXPECT_EQ(logits.cols(), model.config().vocab_size);
}

TEST(Forward, CausalMaskHidesFutureTokens) {
    const Model model(test_models::tiny_config(2));
    const std::vector<int> a{1, 2, 3, 4, 5};
    const std::vector<int> b{1, 7, 0, 9, 2};
    const Matrix la = model.logits(a);
    const Matrix lb = model.logits(b);
    for (std::size_t j = 0; j < la.cols(); ++j) {
        EXPECT_EQ(la(0, j), lb(0, j));
    }
    // position 2 sees tokens 0..2 only
    const std::vector<int> c{1, 7, 0, 4, 4};
    const Matrix lc = model.logits(c);
    for (std::size_t j = 0; j < lb.cols(); ++j) {
        EXPECT_EQ(lb(2, j), lc(2, j));
    }
}

TEST(Forward, SoftmaxOfLogitsNormalises) {
    const Model model(test_models::tiny_config(3));
    const std::vector<int> tokens{0, 1, 2};
    const Matrix logp = log_softmax_rows(model.logits(tokens));
    for (std::size_t i = 0; i < logp.rows(); ++i) {
        double total = 0.0;
        for (double v : logp.row(i)) {
            total += std::exp(v);
        }
        EXPECT_NEAR(total, 1.0, 1e-12);
    }
}

TEST(Forward, RejectsBadInput) {
    const Model model(test_models::tiny_config(4));
    const std::vector<int> bad_token{1, static_cast<int>(model.config().vocab_size)};
    EXPECT_THROW(model.logits(bad_token), TokenRangeError);
    const std::vector<int> too_long(model.config().max_seq_len + 1, 0);
    EXPECT_THROW(model.logits(too_long), SequenceTooLongError);
}

TEST(Forward, DeterministicFromSeed) {
    const Model m1(test_models::tiny_config(9));
    const Model m2(test_models::tiny_config(9));
    const auto p1 = m1.parameters();
    const auto p2 = m2.parameters();
    ASSERT_EQ(p1.size(), p2.size());
    for (std::size_t i = 0; i < p1.size(); ++i) {
        EXPECT_EQ(p1[i].name, p2[i].name);
        EXPECT_EQ(p1[i].tensor.value(), p2[i].tensor.value());
    }
    const std::vector<int> tokens{4, 2, 0};
    EXPECT_EQ(m1.logits(tokens), m2.logits(tokens));
}

TEST(Model, ParameterNamesUniqueAndLabelled) {
    const Model model(test_models::tiny_config(0));
    std::set<std::string> names;
    for (const auto& p : model.parameters()) {
        EXPECT_TRUE(names.insert(p.name).second) << p.name;
    }
    EXPECT_TRUE(names.contains("blocks.1.attn.query.weight"));
    EXPECT_TRUE(names.contains("blocks.0.mlp.down.weight"));
    EXPECT_EQ(model.linears().size(), 7 * model.config().n_layers + 1);
}

TEST(Model, CloneSharesNoTensors) {
    const Model model(test_models::tiny_config(5));
    Model copy = model.clone();
    copy.parameters().front().tensor.mutable_value()(0, 0) += 1.0;
    EXPECT_NE(copy.parameters().front().tensor.value(), model.parameters().front().tensor.value());
}

TEST(CrossEntropy, UniformLogits) {
    const Tensor logits = Tensor::constant(Matrix(3, 8, 0.25));
    const std::vector<int> targets{0, 5, 7};
    EXPECT_NEAR(cross_entropy(logits, targets).item(), std::log(8.0), 1e-15);
}

TEST(CrossEntropy, DominantLogitDrivesLossToZero) {
    double previous = 1e9;
    for (double margin : {1.0, 5.0, 20.0, 60.0}) {
        Matrix z(1, 4, 0.0);
        z(0, 2) = margin;
        const std::vector<int> t{2};
        const double loss = cross_entropy(Tensor::constant(z), t).item();
        EXPECT_LT(loss, previous);
        previous = loss;
    }
    EXPECT_LT(previous, 1e-20);
}

TEST(CrossEntropy, MatchesScalarFormula) {
    const Matrix z = oracle::random_matrix(6, 5, 17, -3.0, 3.0);
    const std::vector<int> t{0, 4, 2, 2, 1, 3};
    double expected = 0.0;
    for (std::size_t i = 0; i < z.rows(); ++i) {
        double denom = 0.0;
        for (std::size_t j = 0; j < z.cols(); ++j) {
            denom += std::exp(z(i, j));
        }
        expected += -std::log(std::exp(z(i, static_cast<std::size_t>(t[i]))) / denom);
    }
    expected /= static_cast<double>(z.rows());
    EXPECT_NEAR(cross_entropy(Tensor::constant(z), t).item(), expected, 1e-12);
}

TEST(CrossEntropy, MaskedPositionsIgnored) {
    const Matrix z = oracle::random_matrix(3, 4, 2);
    const std::vector<int> t{0, 1, 2};
    const bool mask[] = {false, true, false};
    const std::vector<int> t1{1};
    Matrix only(1, 4);
    std::copy(z.row(1).begin(), z.row(1).end(), only.row(0).begin());
    EXPECT_NEAR(cross_entropy(Tensor::constant(z), t, mask).item(),
                cross_entropy(Tensor::constant(only), t1).item(), 1e-15);
}

TEST(CrossEntropy, TargetOutOfRange) {
    const std::vector<int> t{9};
    EXPECT_THROW(cross_entropy(Tensor::constant(Matrix(1, 4)), t), std::out_of_range);
}

TEST(Backward, LinearCaseMatchesAnalytic) {
    // loss = sum(W x) => dL/dW_ij = x_j for every row i
    Tensor w = Tensor::parameter(oracle::random_matrix(3, 4, 1));
    const Matrix x = oracle::random_matrix(4, 1, 2);
    backward(sum(matmul(w, Tensor::constant(x))));
    const Matrix g = w.grad();
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            EXPECT_DOUBLE_EQ(g(i, j), x(j, 0));
        }
    }
}

TEST(Backward, FrozenParameterGetsNoGradient) {
    Tensor w = Tensor::parameter(oracle::random_matrix(3, 3, 1));
    Tensor frozen = Tensor::parameter(oracle::random_matrix(3, 3, 2));
    frozen.set_requires_grad(false);
    backward(sum(matmul(w, frozen)));
    EXPECT_TRUE(w.has_grad());
    EXPECT_FALSE(frozen.has_grad());
}

TEST(Backward, RejectsNonScalar) {
    Tensor w = Tensor::parameter(Matrix(2, 2, 1.0));
    EXPECT_THROW(backward(w), lrsl::DimensionError);
}

TEST(Backward, GradientsAccumulateAcrossCalls) {
    Tensor w = Tensor::parameter(Matrix(1, 1, 2.0));
    backward(sum(scale(w, 3.0)));
    backward(sum(scale(w, 3.0)));
    EXPECT_DOUBLE_EQ(w.grad()(0, 0), 6.0);
}

TEST(Backward, FreezingLeavesExactlyTrainableSetWithGradients) {
    Model model(test_models::tiny_config(12));
    model.set_trainable(false);
    auto params = model.parameters();
    for (std::size_t i = 0; i < params.size(); i += 3) {
        params[i].tensor.set_requires_grad(true);
    }
    const std::vector<int> tokens{1, 2, 3, 4};
    const std::vector<int> targets{2, 3, 4, 5};
    backward(cross_entropy(model.forward(tokens), targets));
    for (const auto& p : params) {
        const bool nonzero = p.tensor.has_grad() && lrsl::linalg::frobenius_norm(p.tensor.grad()) > 0.0;
        EXPECT_EQ(nonzero, p.tensor.requires_grad()) << p.name;
    }
}

TEST(GradCheck, PureLinearModel) {
    std::vector<NamedTensor> params{{"w", Placement::query, Tensor::parameter(oracle::random_matrix(3, 5, 3))}};
    const Tensor x = Tensor::constant(oracle::random_matrix(5, 2, 4));
    const auto r = gradient_check(params, [&] { return sum(matmul(params[0].tensor, x)); }, 15, 1e-5);
    EXPECT_EQ(r.coords_checked, 15u);
    EXPECT_LE(r.max_rel_error, 1e-7);
}

TEST(GradCheck, ErrorGrowsWithStepOnCubic) {
    std::vector<NamedTensor> params{{"w", Placement::query, Tensor::parameter(Matrix(1, 1, 1.3))}};
    auto cubic = [&] {
        const Tensor& w = params[0].tensor;
        return sum(mul(mul(w, w), w));
    };
    const double coarse = gradient_check(params, cubic, 1, 1e-2).max_rel_error;
    const double fine = gradient_check(params, cubic, 1, 1e-4).max_rel_error;
    EXPECT_GT(coarse, fine);
    // truncation error of the central difference on w^3 is h^2 / (3 w^2)
    EXPECT_NEAR(coarse, 1e-4 / (3.0 * 1.3 * 1.3), 1e-8);
}

TEST(GradCheck, RejectsNonPositiveStep) {
    std::vector<NamedTensor> params{{"w", Placement::query, Tensor::parameter(Matrix(1, 1, 1.0))}};
    EXPECT_THROW(gradient_check(params, [&] { return sum(params[0].tensor); }, 1, 0.0), std::invalid_argument);
}

TEST(GradCheck, FullTinyTransformerAcrossSeeds) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Model model(test_models::tiny_config(seed));
        test_models::perturb_parameters(model, seed + 100);
        const auto [tokens, targets] = test_models::random_sequence(model.config(), 6, seed);
        const auto r = gradient_check(model, tokens, targets, 5, 1e-5, seed);
        EXPECT_LE(r.max_rel_error, 1e-5) << "seed " << seed << " worst " << r.worst_parameter;
    }
}

TEST(Ops, GeluDerivativeMatchesFiniteDifference) {
    for (double x : {-3.0, -0.7, 0.0, 0.4, 2.5}) {
        Tensor t = Tensor::parameter(Matrix(1, 1, x));
        backward(sum(gelu(t)));
        const double fd = oracle::central_difference(
            [](double v) { return 0.5 * v * (1.0 + std::tanh(0.7978845608028654 * (v + 0.044715 * v * v * v))); },
            x, 1e-6);
        EXPECT_NEAR(t.grad()(0, 0), fd, 1e-9);
    }
}
