#include <doctest.h>

#include <cmath>

#include "qnorm/layers.hpp"
#include "qnorm/rng.hpp"
#include "test_support.hpp"

using namespace qnorm;
using qnorm::testing::ProbeLoss;
using qnorm::testing::finite_diff;
using qnorm::testing::max_rel_error;

TEST_CASE("effective_weights per quantization mode") {
    SUBCASE("ternary boundary cases are inclusive to zero") {
        DenseLayer layer(Matrix(1, 5, {-0.6, -0.5, 0.0, 0.5, 0.6}),
                         QuantMode::Ternary, 0.5);
        const Matrix w = effective_weights(layer);
        CHECK(w.data() == std::vector<double>{-1, 0, 0, 0, 1});
    }
    SUBCASE("binary with sign(0) = +1") {
        DenseLayer layer(Matrix(1, 3, {-0.1, 0.0, 2.3}), QuantMode::Binary);
        CHECK(effective_weights(layer).data() == std::vector<double>{-1, 1, 1});
    }
    SUBCASE("full precision is the identity") {
        DenseLayer layer(Matrix(2, 2, {0.1, -0.2, 0.3, -0.4}),
                         QuantMode::FullPrecision);
        CHECK(effective_weights(layer).data() == layer.weights.data());
    }
    SUBCASE("ternary requires positive delta") {
        CHECK_THROWS_AS(DenseLayer(Matrix(1, 1, {1.0}), QuantMode::Ternary, 0.0),
                        std::invalid_argument);
    }
}

TEST_CASE("ternary zero-fraction is non-decreasing in delta") {
    RngStream rng(21, 0);
    const Matrix w = sample_uniform(rng, -1.0, 1.0, 32, 32);
    double prev = -1.0;
    for (double delta : {0.05, 0.2, 0.5, 0.8, 1.0}) {
        DenseLayer layer(w, QuantMode::Ternary, delta);
        const Matrix q = effective_weights(layer);
        std::size_t zeros = 0;
        for (double v : q.data()) {
            CHECK((v == -1.0 || v == 0.0 || v == 1.0));
            if (v == 0.0) ++zeros;
        }
        CHECK(static_cast<double>(zeros) >= prev);
        prev = static_cast<double>(zeros);
    }
}

TEST_CASE("dense_forward") {
    SUBCASE("binary hand arithmetic") {
        DenseLayer layer(Matrix(2, 1, {1.0, -1.0}), QuantMode::Binary);
        const Matrix x(1, 2, {1.0, 1.0});
        CHECK(dense_forward(x, layer)(0, 0) == 0.0);
    }
    SUBCASE("identity input returns W") {
        DenseLayer layer(Matrix(2, 2, {0.5, -0.5, 1.5, 2.5}),
                         QuantMode::FullPrecision);
        const Matrix eye(2, 2, {1, 0, 0, 1});
        CHECK(dense_forward(eye, layer).data() == layer.weights.data());
    }
    SUBCASE("ternary matches reference quantizer + triple-loop oracle") {
        RngStream rng(22, 0);
        const Matrix x = sample_normal(rng, 0.0, 1.0, 4, 8);
        const Matrix w = sample_uniform(rng, -1.0, 1.0, 8, 6);
        const double delta = 0.3;
        DenseLayer layer(w, QuantMode::Ternary, delta);
        const Matrix got = dense_forward(x, layer);
        const Matrix want = qnorm::testing::matmul_oracle(
            x, qnorm::testing::ternarize_oracle(w, delta));
        CHECK(got.data() == want.data());
    }
}

TEST_CASE("dense_backward") {
    SUBCASE("zero upstream gradient gives zero outputs") {
        DenseLayer layer(Matrix(3, 2, {1, 2, 3, 4, 5, 6}),
                         QuantMode::FullPrecision);
        const Matrix x(2, 3, {1, 1, 1, 2, 2, 2});
        const DenseGrads g = dense_backward(Matrix(2, 2), x, layer);
        for (double v : g.grad_input.data()) CHECK(v == 0.0);
        for (double v : g.grad_weights.data()) CHECK(v == 0.0);
    }
    SUBCASE("1x1 scalar chain rule") {
        DenseLayer layer(Matrix(1, 1, {3.0}), QuantMode::FullPrecision);
        const Matrix x(1, 1, {2.0});
        const Matrix gs(1, 1, {5.0});
        const DenseGrads g = dense_backward(gs, x, layer);
        CHECK(g.grad_input(0, 0) == 15.0);
        CHECK(g.grad_weights(0, 0) == 10.0);
    }
    SUBCASE("full-precision grad_W matches finite differences") {
        RngStream rng(23, 0);
        const Matrix x = sample_normal(rng, 0.0, 1.0, 5, 3);
        Matrix w = sample_normal(rng, 0.0, 0.5, 3, 4);
        const ProbeLoss probe(5, 4, 23);

        DenseLayer layer(w, QuantMode::FullPrecision);
        const DenseGrads g = dense_backward(probe.coeff, x, layer);

        std::vector<double*> params;
        for (double& v : w.data()) params.push_back(&v);
        const auto fd = finite_diff(
            [&] {
                return probe(dense_forward(x, DenseLayer(w, QuantMode::FullPrecision)));
            },
            params);
        CHECK(max_rel_error(g.grad_weights.data(), fd) < 1e-6);
    }
}

TEST_CASE("batchnorm_forward") {
    SUBCASE("standardization and affine map") {
        BatchNormLayer bn(1, 0.0);
        const Matrix s(2, 1, {1.0, 3.0});
        const BatchNormForward f = batchnorm_forward(s, bn);
        CHECK(f.z(0, 0) == doctest::Approx(-1.0));
        CHECK(f.z(1, 0) == doctest::Approx(1.0));

        BatchNormLayer bn2(1, 0.0);
        bn2.gamma[0] = 2.0;
        bn2.beta[0] = 5.0;
        const BatchNormForward f2 = batchnorm_forward(s, bn2);
        CHECK(f2.z(0, 0) == doctest::Approx(3.0));
        CHECK(f2.z(1, 0) == doctest::Approx(7.0));
    }
    SUBCASE("output columns have mean 0 and biased var 1") {
        RngStream rng(31, 0);
        const Matrix s = sample_normal(rng, 2.0, 3.0, 32, 8);
        BatchNormLayer bn(8, 0.0);
        const BatchNormForward f = batchnorm_forward(s, bn);
        const ColumnStats st = column_stats(f.z, Divisor::Biased);
        for (std::size_t j = 0; j < 8; ++j) {
            CHECK(std::abs(st.means[j]) < 1e-12);
            CHECK(std::abs(st.vars[j] - 1.0) < 1e-10);
        }
    }
    SUBCASE("errors") {
        BatchNormLayer bn(1, 0.0);
        CHECK_THROWS_AS(batchnorm_forward(Matrix(1, 1, {1.0}), bn),
                        std::invalid_argument);
        CHECK_THROWS_AS(batchnorm_forward(Matrix(3, 1, {2.0, 2.0, 2.0}), bn),
                        std::runtime_error);
    }
}

TEST_CASE("batchnorm_backward") {
    SUBCASE("zero upstream gradient") {
        RngStream rng(32, 0);
        const Matrix s = sample_normal(rng, 0.0, 1.0, 8, 4);
        BatchNormLayer bn(4, 0.0);
        const BatchNormForward f = batchnorm_forward(s, bn);
        const BatchNormGrads g = batchnorm_backward(Matrix(8, 4), f.cache, bn);
        for (double v : g.grad_s.data()) CHECK(v == 0.0);
        for (double v : g.grad_gamma) CHECK(v == 0.0);
        for (double v : g.grad_beta) CHECK(v == 0.0);
    }
    SUBCASE("per-column sums of grad_S telescope to zero") {
        RngStream rng(33, 0);
        for (int trial = 0; trial < 10; ++trial) {
            const std::size_t b = 2 + rng.next_u64() % 30;
            const std::size_t k = 1 + rng.next_u64() % 8;
            const Matrix s = sample_normal(rng, 0.0, 2.0, b, k);
            const Matrix gz = sample_normal(rng, 0.0, 1.0, b, k);
            BatchNormLayer bn(k, 0.0);
            const BatchNormForward f = batchnorm_forward(s, bn);
            const BatchNormGrads g = batchnorm_backward(gz, f.cache, bn);
            for (std::size_t j = 0; j < k; ++j) {
                double sum = 0.0, sum_shat = 0.0;
                for (std::size_t i = 0; i < b; ++i) {
                    sum += g.grad_s(i, j);
                    sum_shat += f.cache.s_hat(i, j) * g.grad_s(i, j);
                }
                CHECK(std::abs(sum) < 1e-10);
                CHECK(std::abs(sum_shat) < 1e-10);
            }
        }
    }
    SUBCASE("grad_S, grad_gamma, grad_beta match finite differences") {
        for (std::size_t b : {4, 16, 64}) {
            for (std::size_t k : {1, 8, 32}) {
                RngStream rng(34, b * 100 + k);
                Matrix s = sample_normal(rng, 0.0, 2.0, b, k);
                BatchNormLayer bn(k, 0.0);
                for (std::size_t j = 0; j < k; ++j) {
                    bn.gamma[j] = rng.uniform(0.5, 1.5);
                    bn.beta[j] = rng.normal(0.0, 0.5);
                }
                const ProbeLoss probe(b, k, b * 1000 + k);
                const BatchNormForward f = batchnorm_forward(s, bn);
                const BatchNormGrads g = batchnorm_backward(probe.coeff, f.cache, bn);

                const auto loss = [&] { return probe(batchnorm_forward(s, bn).z); };

                std::vector<double*> s_params;
                for (double& v : s.data()) s_params.push_back(&v);
                CHECK(max_rel_error(g.grad_s.data(), finite_diff(loss, s_params)) <
                      1e-6);

                std::vector<double*> gamma_params;
                for (double& v : bn.gamma) gamma_params.push_back(&v);
                CHECK(max_rel_error(g.grad_gamma, finite_diff(loss, gamma_params)) <
                      1e-6);

                std::vector<double*> beta_params;
                for (double& v : bn.beta) beta_params.push_back(&v);
                CHECK(max_rel_error(g.grad_beta, finite_diff(loss, beta_params)) <
                      1e-6);
            }
        }
    }
}

TEST_CASE("ste activation") {
    const Matrix g(1, 2, {5.0, -3.0});
    CHECK(ste_activation_backward(g).data() == g.data());

    const Matrix s(1, 2, {-0.2, 0.9});
    CHECK(ste_activation(s, true).data() == std::vector<double>{-1.0, 1.0});
    CHECK(ste_activation(s, false).data() == s.data());
}

TEST_CASE("fold_batchnorm_bias") {
    SUBCASE("gamma=1, beta=0 returns the batch means") {
        RngStream rng(41, 0);
        const Matrix s = sample_normal(rng, 1.0, 2.0, 16, 4);
        BatchNormLayer bn(4, 0.0);
        const BatchNormForward f = batchnorm_forward(s, bn);
        const auto bias = fold_batchnorm_bias(f.cache, bn);
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(bias[j] == doctest::Approx(f.cache.mu[j]));
    }
    SUBCASE("hand arithmetic") {
        BatchNormLayer bn(1, 0.0);
        bn.gamma[0] = 2.0;
        bn.beta[0] = 4.0;
        BatchNormCache cache{{2.0}, {1.0}, Matrix(2, 1)};
        CHECK(fold_batchnorm_bias(cache, bn)[0] == doctest::Approx(0.0));
    }
    SUBCASE("gamma = 0 rejected") {
        BatchNormLayer bn(1, 0.0);
        bn.gamma[0] = 0.0;
        BatchNormCache cache{{0.0}, {1.0}, Matrix(2, 1)};
        CHECK_THROWS_AS(fold_batchnorm_bias(cache, bn), std::invalid_argument);
    }
    SUBCASE("sign equivalence for gamma > 0 on random batches") {
        RngStream rng(42, 0);
        for (int trial = 0; trial < 50; ++trial) {
            const std::size_t b = 2 + rng.next_u64() % 16;
            const std::size_t k = 1 + rng.next_u64() % 8;
            const Matrix s = sample_normal(rng, 0.0, 1.0, b, k);
            BatchNormLayer bn(k, 0.0);
            for (std::size_t j = 0; j < k; ++j) {
                bn.gamma[j] = rng.uniform(0.1, 3.0);
                bn.beta[j] = rng.normal(0.0, 1.0);
            }
            const BatchNormForward f = batchnorm_forward(s, bn);
            const auto bias = fold_batchnorm_bias(f.cache, bn);
            for (std::size_t i = 0; i < b; ++i)
                for (std::size_t j = 0; j < k; ++j)
                    CHECK(sign_pos(f.z(i, j)) == sign_pos(s(i, j) - bias[j]));
        }
    }
}
