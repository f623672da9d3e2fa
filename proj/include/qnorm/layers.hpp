#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qnorm/matrix.hpp"
#include "qnorm/stats.hpp"

namespace qnorm {

enum class QuantMode { FullPrecision, Binary, Ternary };

// sign(0) = +1, fixed for determinism.
inline double sign_pos(double x) { return x < 0.0 ? -1.0 : 1.0; }

struct DenseLayer {
    Matrix weights;          // latent full-precision W, fan_in x fan_out
    QuantMode quant_mode = QuantMode::FullPrecision;
    double delta = 0.0;      // ternary threshold, unused otherwise

    DenseLayer(Matrix w, QuantMode mode, double d = 0.0)
        : weights(std::move(w)), quant_mode(mode), delta(d) {
        if (mode == QuantMode::Ternary && !(delta > 0.0))
            throw std::invalid_argument("DenseLayer: ternary mode needs delta > 0");
    }
};

// Forward-pass weights: identity, sign, or the ternary quantizer
// (-1 below -delta, +1 above delta, 0 on the closed middle interval).
inline Matrix effective_weights(const DenseLayer& layer) {
    switch (layer.quant_mode) {
        case QuantMode::FullPrecision:
            return layer.weights;
        case QuantMode::Binary: {
            Matrix w = layer.weights;
            for (double& v : w.data()) v = sign_pos(v);
            return w;
        }
        case QuantMode::Ternary: {
            Matrix w = layer.weights;
            for (double& v : w.data())
                v = v < -layer.delta ? -1.0 : (v > layer.delta ? 1.0 : 0.0);
            return w;
        }
    }
    throw std::logic_error("effective_weights: unreachable");
}

// s = X * W_eff, no bias term.
inline Matrix dense_forward(const Matrix& x, const DenseLayer& layer) {
    return matmul(x, effective_weights(layer));
}

struct DenseGrads {
    Matrix grad_input;
    Matrix grad_weights;
};

// Straight-through: the latent-weight gradient equals the effective-weight
// gradient (quantizer derivative treated as 1, no clipping window).
inline DenseGrads dense_backward(const Matrix& grad_s, const Matrix& x,
                                 const DenseLayer& layer) {
    if (grad_s.rows() != x.rows())
        throw std::invalid_argument("dense_backward: batch sizes disagree, " +
                                    grad_s.shape_str() + " vs " + x.shape_str());
    return {matmul(grad_s, transpose(effective_weights(layer))),
            matmul(transpose(x), grad_s)};
}

struct BatchNormLayer {
    std::vector<double> gamma;  // init 1
    std::vector<double> beta;   // init 0
    double epsilon = 1e-8;

    explicit BatchNormLayer(std::size_t width, double eps = 1e-8)
        : gamma(width, 1.0), beta(width, 0.0), epsilon(eps) {
        if (eps < 0.0)
            throw std::invalid_argument("BatchNormLayer: epsilon must be >= 0");
    }
};

struct BatchNormCache {
    std::vector<double> mu;     // per-column batch mean
    std::vector<double> sigma;  // sqrt(biased var + epsilon)
    Matrix s_hat;               // standardized dot products
};

struct BatchNormForward {
    Matrix z;
    BatchNormCache cache;
};

// z = gamma * (s - mu) / sigma + beta with divisor-B batch statistics.
inline BatchNormForward batchnorm_forward(const Matrix& s,
                                          const BatchNormLayer& bn) {
    const std::size_t b = s.rows(), k = s.cols();
    if (b < 2)
        throw std::invalid_argument("batchnorm_forward: batch size must be >= 2");
    if (k != bn.gamma.size())
        throw std::invalid_argument("batchnorm_forward: width " + s.shape_str() +
                                    " disagrees with layer width " +
                                    std::to_string(bn.gamma.size()));
    const ColumnStats stats = column_stats(s, Divisor::Biased);
    BatchNormForward out{Matrix(b, k), {stats.means, {}, Matrix(b, k)}};
    out.cache.sigma.resize(k);
    for (std::size_t j = 0; j < k; ++j) {
        const double var = stats.vars[j] + bn.epsilon;
        if (var <= 0.0)
            throw std::runtime_error("batchnorm_forward: degenerate batch column " +
                                     std::to_string(j));
        const double sigma = std::sqrt(var);
        out.cache.sigma[j] = sigma;
        for (std::size_t i = 0; i < b; ++i) {
            const double shat = (s(i, j) - stats.means[j]) / sigma;
            out.cache.s_hat(i, j) = shat;
            out.z(i, j) = bn.gamma[j] * shat + bn.beta[j];
        }
    }
    return out;
}

struct BatchNormGrads {
    Matrix grad_s;
    std::vector<double> grad_gamma;
    std::vector<double> grad_beta;
};

// Hand-derived backward:
//   dL/ds_b = (gamma/sigma) * (g_b - (1/B) sum g - (shat_b/B) sum g*shat)
//   dL/dbeta = sum g,  dL/dgamma = sum g*shat
inline BatchNormGrads batchnorm_backward(const Matrix& grad_z,
                                         const BatchNormCache& cache,
                                         const BatchNormLayer& bn) {
    const std::size_t b = grad_z.rows(), k = grad_z.cols();
    if (b != cache.s_hat.rows() || k != cache.s_hat.cols())
        throw std::invalid_argument("batchnorm_backward: gradient shape " +
                                    grad_z.shape_str() + " disagrees with cache " +
                                    cache.s_hat.shape_str());
    BatchNormGrads out{Matrix(b, k), std::vector<double>(k, 0.0),
                       std::vector<double>(k, 0.0)};
    const double inv_b = 1.0 / static_cast<double>(b);
    for (std::size_t j = 0; j < k; ++j) {
        double sum_g = 0.0, sum_gs = 0.0;
        for (std::size_t i = 0; i < b; ++i) {
            sum_g += grad_z(i, j);
            sum_gs += grad_z(i, j) * cache.s_hat(i, j);
        }
        out.grad_beta[j] = sum_g;
        out.grad_gamma[j] = sum_gs;
        const double scale = bn.gamma[j] / cache.sigma[j];
        for (std::size_t i = 0; i < b; ++i)
            out.grad_s(i, j) =
                scale * (grad_z(i, j) - inv_b * sum_g -
                         cache.s_hat(i, j) * inv_b * sum_gs);
    }
    return out;
}

// Quantized-activation forward: elementwise sign when on, identity when off.
inline Matrix ste_activation(const Matrix& s, bool sign_mode) {
    if (!sign_mode) return s;
    Matrix out = s;
    for (double& v : out.data()) v = sign_pos(v);
    return out;
}

// Backward is pass-through in both modes (straight-through, f' = 1).
inline Matrix ste_activation_backward(const Matrix& grad) { return grad; }

// BatchNorm-to-bias folding: b_k = mu_k - (sigma_k / gamma_k) * beta_k.
// Valid for gamma_k != 0; sign equivalence additionally needs gamma_k > 0.
inline std::vector<double> fold_batchnorm_bias(const BatchNormCache& cache,
                                               const BatchNormLayer& bn) {
    const std::size_t k = bn.gamma.size();
    if (cache.mu.size() != k || cache.sigma.size() != k)
        throw std::invalid_argument("fold_batchnorm_bias: cache width disagrees");
    std::vector<double> bias(k);
    for (std::size_t j = 0; j < k; ++j) {
        if (bn.gamma[j] == 0.0)
            throw std::invalid_argument("fold_batchnorm_bias: gamma[" +
                                        std::to_string(j) + "] = 0");
        bias[j] = cache.mu[j] - (cache.sigma[j] / bn.gamma[j]) * bn.beta[j];
    }
    return bias;
}

}  // namespace qnorm
