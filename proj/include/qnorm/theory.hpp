#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "qnorm/layers.hpp"

namespace qnorm {

enum class InitScheme { UniformHe2, UniformFan1, NormalHe2, NormalFan1 };

// Declarative description of an experiment network. widths[0] is the
// input dimension; layers are l = 1..L with L = widths.size() - 1.
struct NetworkSpec {
    std::vector<std::size_t> widths;
    QuantMode quant_mode = QuantMode::FullPrecision;
    bool batchnorm = false;
    std::size_t batch_size = 0;
    InitScheme init = InitScheme::UniformHe2;
    bool sign_activations = false;
    double var_x = 1.0;    // input variance
    double var_gl = 1.0;   // variance of the injected output gradient

    std::size_t num_layers() const { return widths.size() - 1; }

    void validate() const {
        if (widths.size() < 3)
            throw std::invalid_argument("NetworkSpec: needs at least 2 layers "
                                        "(3 width entries)");
        for (std::size_t w : widths)
            if (w < 1) throw std::invalid_argument("NetworkSpec: widths must be >= 1");
        if (batch_size < 2)
            throw std::invalid_argument("NetworkSpec: batch_size must be >= 2");
        if (!(var_x > 0.0))
            throw std::invalid_argument("NetworkSpec: var_x must be > 0");
        if (!(var_gl > 0.0))
            throw std::invalid_argument("NetworkSpec: var_gl must be > 0");
    }
};

struct LayerPrediction {
    std::size_t layer = 0;       // l, 1-based
    double predicted_var = 0.0;  // Var(dL/ds^l)
    double predicted_ratio = 1.0;  // Var_l / Var_{l+1}; 1 for l = L
    std::string formula_id;
};

struct PredictionReport {
    std::vector<LayerPrediction> layers;  // l = 1..L
};

struct InitParams {
    bool is_uniform = true;
    double param = 0.0;  // half-width (uniform) or standard deviation (normal)
};

// Target weight variance of the scheme: 2/K (He-style) or 1/K.
inline double init_weight_variance(InitScheme scheme, std::size_t k_fanin) {
    const double k = static_cast<double>(k_fanin);
    switch (scheme) {
        case InitScheme::UniformHe2:
        case InitScheme::NormalHe2:
            return 2.0 / k;
        case InitScheme::UniformFan1:
        case InitScheme::NormalFan1:
            return 1.0 / k;
    }
    throw std::logic_error("init_weight_variance: unreachable");
}

// Half-width or sd realizing the scheme's variance for a given fan-in.
// Uniform(-a, a) has variance a^2/3, so a = sqrt(3 * Var).
inline InitParams init_params(InitScheme scheme, std::size_t k_fanin) {
    if (k_fanin < 1) throw std::invalid_argument("init_params: K must be >= 1");
    const double var = init_weight_variance(scheme, k_fanin);
    switch (scheme) {
        case InitScheme::UniformHe2:
        case InitScheme::UniformFan1:
            return {true, std::sqrt(3.0 * var)};
        case InitScheme::NormalHe2:
        case InitScheme::NormalFan1:
            return {false, std::sqrt(var)};
    }
    throw std::logic_error("init_params: unreachable");
}

// E|w| under the init law: a/2 for Uniform(-a, a), sd * sqrt(2/pi) for normal.
inline double init_mean_abs_weight(InitScheme scheme, std::size_t k_fanin) {
    const InitParams p = init_params(scheme, k_fanin);
    return p.is_uniform ? p.param / 2.0
                        : p.param * std::sqrt(2.0 / M_PI);
}

// Ternary threshold Delta = 0.7 * E|w|; under UniformHe2 this is
// (0.7/2) * sqrt(6/K).
inline double ternary_threshold(InitScheme scheme, std::size_t k_fanin) {
    return 0.7 * init_mean_abs_weight(scheme, k_fanin);
}

inline double ternary_threshold(std::size_t k_fanin) {
    return ternary_threshold(InitScheme::UniformHe2, k_fanin);
}

// Var of the ternarized weight under UniformHe2 latent weights:
// 2 * P(|w| > Delta) = 1 - Delta / sqrt(6/K). Equals 0.65 at the
// recommended threshold, independent of K.
inline double ternary_weight_variance(double delta, std::size_t k_fanin) {
    const double a = std::sqrt(6.0 / static_cast<double>(k_fanin));
    if (delta < 0.0 || delta > a)
        throw std::invalid_argument(
            "ternary_weight_variance: delta must be in [0, sqrt(6/K)]");
    return 1.0 - delta / a;
}

// Predicted BatchNorm sigma^2 for a ternary layer with fan-in K_prev.
inline double predict_sigma_sq_ternary(std::size_t k_prev, double var_wt) {
    if (k_prev < 1 || var_wt < 0.0)
        throw std::invalid_argument("predict_sigma_sq_ternary: bad inputs");
    return static_cast<double>(k_prev) * var_wt / 2.0;
}

// Fraction of ternary weights quantized to zero; learning is considered
// feasible below 50%.
struct SparsityReport {
    double fraction_zero = 0.0;
    bool feasible = true;
};

inline SparsityReport sparsity_feasibility(double delta, std::size_t k_fanin) {
    if (delta < 0.0) throw std::invalid_argument("sparsity_feasibility: delta < 0");
    const double a = std::sqrt(6.0 / static_cast<double>(k_fanin));
    const double frac = std::clamp(delta / a, 0.0, 1.0);
    return {frac, frac < 0.5};
}

// Left-hand side of the stabilization condition:
// (gamma/B)^2 * (B^2 + 2B - 1 + Var(shat^2)); near 1 means stable.
inline double stabilization_factor(double gamma, std::size_t batch,
                                   double var_shat_sq) {
    if (batch < 2)
        throw std::invalid_argument("stabilization_factor: B must be >= 2");
    const double b = static_cast<double>(batch);
    return (gamma / b) * (gamma / b) *
           (b * b + 2.0 * b - 1.0 + var_shat_sq);
}

// Forward variance product for full-precision nets without BatchNorm:
// Var(s^l) = Var(x) * prod_{l'=1}^{l} K_{l'-1} Var(w^{l'}).
inline std::vector<double> predict_forward_var_fp(const NetworkSpec& spec) {
    if (spec.quant_mode != QuantMode::FullPrecision || spec.batchnorm)
        throw std::invalid_argument(
            "predict_forward_var_fp: full-precision, no BatchNorm only");
    std::vector<double> vars;
    double acc = spec.var_x;
    for (std::size_t l = 1; l <= spec.num_layers(); ++l) {
        acc *= static_cast<double>(spec.widths[l - 1]) *
               init_weight_variance(spec.init, spec.widths[l - 1]);
        vars.push_back(acc);
    }
    return vars;
}

// Backward variance product, full precision, no BatchNorm:
// Var(dL/ds^l) = Var(dL/ds^L) * prod_{l'=l+1}^{L} K_{l'} Var(w^{l'}).
inline PredictionReport predict_backward_var_fp_nobn(const NetworkSpec& spec) {
    const std::size_t L = spec.num_layers();
    PredictionReport report;
    report.layers.resize(L);
    double acc = spec.var_gl;
    for (std::size_t l = L; l >= 1; --l) {
        LayerPrediction& p = report.layers[l - 1];
        p.layer = l;
        p.formula_id = "fp_nobn_product";
        p.predicted_var = acc;
        if (l < L) {
            p.predicted_ratio = static_cast<double>(spec.widths[l + 1]) *
                                init_weight_variance(spec.init, spec.widths[l]);
        }
        if (l > 1)
            acc *= static_cast<double>(spec.widths[l]) *
                   init_weight_variance(spec.init, spec.widths[l - 1]);
    }
    return report;
}

// Eq.-(2)-style per-layer ratio for full-precision nets with BatchNorm,
// gamma = 1 at init. sigma_per_layer[l-1] is sigma-hat of layer l
// (measured or modeled); var_shat_sq defaults to 2 (Gaussian shat).
inline PredictionReport predict_backward_var_fp_bn(
    const NetworkSpec& spec, const std::vector<double>& sigma_per_layer,
    double var_shat_sq, const std::string& formula_id = "fp_bn_eq2") {
    const std::size_t L = spec.num_layers();
    if (sigma_per_layer.size() != L)
        throw std::invalid_argument("predict_backward_var_fp_bn: need one sigma "
                                    "per layer");
    const double stab = stabilization_factor(1.0, spec.batch_size, var_shat_sq);
    PredictionReport report;
    report.layers.resize(L);
    double acc = spec.var_gl;
    for (std::size_t l = L; l >= 1; --l) {
        LayerPrediction& p = report.layers[l - 1];
        p.layer = l;
        p.formula_id = formula_id;
        p.predicted_var = acc;
        if (l < L) {
            const double sigma = sigma_per_layer[l - 1];
            p.predicted_ratio =
                stab / (sigma * sigma) * static_cast<double>(spec.widths[l + 1]) *
                init_weight_variance(spec.init, spec.widths[l]);
        }
        if (l > 1) {
            const double sigma = sigma_per_layer[l - 2];
            acc *= stab / (sigma * sigma) * static_cast<double>(spec.widths[l]) *
                   init_weight_variance(spec.init, spec.widths[l - 1]);
        }
    }
    return report;
}

// Binary nets: without BatchNorm Var amplifies by K_{l'} per layer; with
// BatchNorm the per-layer ratio is the width ratio K_{l+1}/K_{l-1} up to
// o(1/B^{1-eps}), which is reported qualitatively, never as a number.
inline PredictionReport predict_backward_var_binary(const NetworkSpec& spec) {
    if (spec.quant_mode != QuantMode::Binary)
        throw std::invalid_argument("predict_backward_var_binary: binary mode only");
    const std::size_t L = spec.num_layers();
    PredictionReport report;
    report.layers.resize(L);
    double acc = spec.var_gl;
    for (std::size_t l = L; l >= 1; --l) {
        LayerPrediction& p = report.layers[l - 1];
        p.layer = l;
        p.formula_id = spec.batchnorm ? "binary_bn_width_ratio"
                                      : "binary_nobn_product";
        p.predicted_var = acc;
        if (l < L)
            p.predicted_ratio =
                spec.batchnorm
                    ? static_cast<double>(spec.widths[l + 1]) /
                          static_cast<double>(spec.widths[l - 1])
                    : static_cast<double>(spec.widths[l + 1]);
        if (l > 1)
            acc *= spec.batchnorm
                       ? static_cast<double>(spec.widths[l]) /
                             static_cast<double>(spec.widths[l - 2])
                       : static_cast<double>(spec.widths[l]);
    }
    return report;
}

// Ternary with BatchNorm reduces to the same width-ratio law.
inline PredictionReport predict_backward_var_ternary_bn(const NetworkSpec& spec) {
    if (spec.quant_mode != QuantMode::Ternary || !spec.batchnorm)
        throw std::invalid_argument(
            "predict_backward_var_ternary_bn: ternary mode with BatchNorm only");
    NetworkSpec as_binary = spec;
    as_binary.quant_mode = QuantMode::Binary;
    PredictionReport report = predict_backward_var_binary(as_binary);
    for (LayerPrediction& p : report.layers)
        p.formula_id = "ternary_bn_width_ratio";
    return report;
}

// Model sigma-hat at init when no measurement is available: the dot
// product of layer l pools K_{l-1} unit-variance activations through
// weights of the layer's init variance (input layer uses var_x).
inline std::vector<double> model_sigma_fp(const NetworkSpec& spec) {
    std::vector<double> sigma;
    for (std::size_t l = 1; l <= spec.num_layers(); ++l) {
        const double fan = static_cast<double>(spec.widths[l - 1]);
        const double act_var = l == 1 ? spec.var_x : 1.0;
        sigma.push_back(std::sqrt(
            fan * act_var * init_weight_variance(spec.init, spec.widths[l - 1])));
    }
    return sigma;
}

// Dispatch on (quant_mode, batchnorm). Full-precision BatchNorm predictions
// use modeled sigma unless the caller supplies measured values.
inline PredictionReport predict_backward_var(const NetworkSpec& spec) {
    spec.validate();
    switch (spec.quant_mode) {
        case QuantMode::FullPrecision:
            if (!spec.batchnorm) return predict_backward_var_fp_nobn(spec);
            return predict_backward_var_fp_bn(spec, model_sigma_fp(spec), 2.0,
                                              "fp_bn_eq2_modeled_sigma");
        case QuantMode::Binary:
            return predict_backward_var_binary(spec);
        case QuantMode::Ternary:
            if (spec.batchnorm) return predict_backward_var_ternary_bn(spec);
            throw std::invalid_argument(
                "predict_backward_var: no closed form for ternary without "
                "BatchNorm");
    }
    throw std::logic_error("predict_backward_var: unreachable");
}

}  // namespace qnorm
