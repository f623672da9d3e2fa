#pragma once

// Test-only oracles, independent of the implementation paths they check.

#include <cmath>
#include <functional>
#include <vector>

#include "qnorm/layers.hpp"
#include "qnorm/matrix.hpp"
#include "qnorm/rng.hpp"

namespace qnorm::testing {

// Naive triple-loop reference product, same left-to-right summation order.
inline Matrix matmul_oracle(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k)
                acc += a(i, k) * b(k, j);
            c(i, j) = acc;
        }
    return c;
}

// Reference ternary quantizer, written independently of effective_weights.
inline Matrix ternarize_oracle(const Matrix& w, double delta) {
    Matrix out = w;
    for (double& v : out.data()) {
        if (v < -delta)
            v = -1.0;
        else if (v > delta)
            v = 1.0;
        else
            v = 0.0;
    }
    return out;
}

// Central finite differences of a scalar loss over a flat parameter view.
inline std::vector<double> finite_diff(
    const std::function<double()>& loss, std::vector<double*> params,
    double h = 1e-5) {
    std::vector<double> grad(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = *params[i];
        *params[i] = saved + h;
        const double up = loss();
        *params[i] = saved - h;
        const double down = loss();
        *params[i] = saved;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

// Max absolute difference relative to the gradient scale (max-norm), the
// usual gradient-check measure; elementwise ratios on near-zero entries
// would only measure finite-difference roundoff.
inline double max_rel_error(const std::vector<double>& got,
                            const std::vector<double>& want) {
    double scale = 1e-12;
    for (double v : got) scale = std::max(scale, std::abs(v));
    for (double v : want) scale = std::max(scale, std::abs(v));
    double worst = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i)
        worst = std::max(worst, std::abs(got[i] - want[i]) / scale);
    return worst;
}

// Scalar probe loss sum(c .* M) with fixed random coefficients.
struct ProbeLoss {
    Matrix coeff;

    explicit ProbeLoss(std::size_t rows, std::size_t cols, std::uint64_t seed)
        : coeff(rows, cols) {
        RngStream rng(seed, 777);
        for (double& v : coeff.data()) v = rng.normal(0.0, 1.0);
    }

    double operator()(const Matrix& m) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < m.rows(); ++i)
            for (std::size_t j = 0; j < m.cols(); ++j)
                acc += coeff(i, j) * m(i, j);
        return acc;
    }
};

}  // namespace qnorm::testing
