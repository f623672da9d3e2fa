#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "qnorm/layers.hpp"
#include "qnorm/rng.hpp"
#include "qnorm/stats.hpp"
#include "qnorm/theory.hpp"

namespace qnorm {

enum class ResampleMode { WeightsAndData, DataOnly };

struct ExperimentConfig {
    NetworkSpec spec;
    std::size_t replications = 2;
    std::uint64_t master_seed = 0;
    ResampleMode resample = ResampleMode::WeightsAndData;
    double epsilon_bn = 1e-8;
    double tolerance = 0.15;  // relative tolerance for compare()

    void validate() const {
        spec.validate();
        if (replications < 2)
            throw std::invalid_argument("ExperimentConfig: replications must be >= 2");
        if (epsilon_bn < 0.0)
            throw std::invalid_argument("ExperimentConfig: epsilon_bn must be >= 0");
        if (tolerance < 0.0)
            throw std::invalid_argument("ExperimentConfig: tolerance must be >= 0");
    }
};

struct Network {
    std::vector<DenseLayer> dense;       // layers 1..L
    std::vector<BatchNormLayer> bn;      // parallel to dense when batchnorm on
    bool batchnorm = false;
    bool sign_activations = false;
    std::vector<std::string> warnings;
};

// Stream-id layout: each replication owns three streams (weights, data,
// injected gradient); DataOnly mode draws weights once from a reserved id.
namespace stream_ids {
constexpr std::uint64_t kSharedWeights = 0xfffffffffffffff0ull;
inline std::uint64_t weights(std::size_t rep) { return rep * 4 + 1; }
inline std::uint64_t data(std::size_t rep) { return rep * 4 + 2; }
inline std::uint64_t grad(std::size_t rep) { return rep * 4 + 3; }
}  // namespace stream_ids

inline Network build_network(const NetworkSpec& spec, RngStream& rng,
                             double epsilon_bn = 1e-8) {
    spec.validate();
    Network net;
    net.batchnorm = spec.batchnorm;
    net.sign_activations = spec.sign_activations;
    for (std::size_t l = 1; l <= spec.num_layers(); ++l) {
        const std::size_t fan_in = spec.widths[l - 1];
        const std::size_t fan_out = spec.widths[l];
        const InitParams p = init_params(spec.init, fan_in);
        Matrix w = p.is_uniform
                       ? sample_uniform(rng, -p.param, p.param, fan_in, fan_out)
                       : sample_normal(rng, 0.0, p.param, fan_in, fan_out);
        double delta = 0.0;
        if (spec.quant_mode == QuantMode::Ternary) {
            delta = ternary_threshold(spec.init, fan_in);
            const SparsityReport sp = sparsity_feasibility(delta, fan_in);
            if (!sp.feasible)
                net.warnings.push_back(
                    "layer " + std::to_string(l) + ": predicted zero-fraction " +
                    std::to_string(sp.fraction_zero) + " >= 0.5, learning infeasible");
        }
        net.dense.emplace_back(std::move(w), spec.quant_mode, delta);
        if (spec.batchnorm) net.bn.emplace_back(fan_out, epsilon_bn);
    }
    return net;
}

// Streaming moments for one (replication, layer) cell. The summation order
// is fixed by the row-major element order, so results are reproducible.
struct Moments {
    std::size_t n = 0;
    double sum = 0.0;
    double sumsq = 0.0;

    void add(double x) {
        ++n;
        sum += x;
        sumsq += x * x;
    }
    double variance_unbiased() const {
        if (n < 2) return std::numeric_limits<double>::quiet_NaN();
        return (sumsq - sum * sum / static_cast<double>(n)) /
               static_cast<double>(n - 1);
    }
};

struct ReplicationResult {
    // Per layer l = 1..L; truncated marks layers lost to overflow.
    std::vector<Moments> grad;
    std::vector<bool> truncated;
    std::vector<double> sigma_mean;  // per-layer mean sigma-hat (BN only)
    std::vector<Moments> shat_sq;    // moments of shat^2 (BN only)
};

// One Monte Carlo draw: fresh input and injected output gradient, forward
// with cached BatchNorm statistics, backward collecting dL/ds^l per layer.
// Gradient explosion shows up as non-finite values; layers below the first
// non-finite one are recorded as truncated, not errors.
inline ReplicationResult run_replication(const Network& net,
                                         const ExperimentConfig& config,
                                         std::size_t rep_index) {
    const NetworkSpec& spec = config.spec;
    const std::size_t L = net.dense.size();
    const std::size_t B = spec.batch_size;

    RngStream rng_data(config.master_seed, stream_ids::data(rep_index));
    RngStream rng_grad(config.master_seed, stream_ids::grad(rep_index));

    std::vector<Matrix> w_eff;
    w_eff.reserve(L);
    for (const DenseLayer& d : net.dense) w_eff.push_back(effective_weights(d));

    ReplicationResult res;
    res.grad.resize(L);
    res.truncated.assign(L, false);
    res.sigma_mean.assign(L, std::numeric_limits<double>::quiet_NaN());
    res.shat_sq.resize(L);

    // Forward.
    std::vector<BatchNormCache> caches(L);
    Matrix act = sample_normal(rng_data, 0.0, std::sqrt(spec.var_x), B,
                               spec.widths[0]);
    for (std::size_t l = 0; l < L; ++l) {
        Matrix s = matmul(act, w_eff[l]);
        if (net.batchnorm) {
            BatchNormForward f = batchnorm_forward(s, net.bn[l]);
            caches[l] = std::move(f.cache);
            double sig = 0.0;
            for (double v : caches[l].sigma) sig += v;
            res.sigma_mean[l] = sig / static_cast<double>(caches[l].sigma.size());
            for (double v : caches[l].s_hat.data()) res.shat_sq[l].add(v * v);
            if (l + 1 < L) act = ste_activation(f.z, net.sign_activations);
        } else {
            if (l + 1 < L) act = ste_activation(s, net.sign_activations);
        }
    }

    // Backward from the injected output gradient dL/ds^L.
    Matrix grad_s = sample_normal(rng_grad, 0.0, std::sqrt(spec.var_gl), B,
                                  spec.widths[L]);
    for (std::size_t l = L; l >= 1; --l) {
        const bool finite = grad_s.all_finite();
        if (!finite) {
            for (std::size_t l2 = l; l2 >= 1; --l2) res.truncated[l2 - 1] = true;
            break;
        }
        for (double v : grad_s.data()) res.grad[l - 1].add(v);
        if (l == 1) break;
        // dL/dact^{l-1}, then STE pass-through, then BatchNorm backward.
        Matrix g = matmul(grad_s, transpose(w_eff[l - 1]));
        g = ste_activation_backward(g);
        if (net.batchnorm)
            grad_s = batchnorm_backward(g, caches[l - 2], net.bn[l - 2]).grad_s;
        else
            grad_s = std::move(g);
    }
    return res;
}

struct LayerStats {
    std::size_t layer = 0;
    double empirical_var = 0.0;
    double stderr_ = 0.0;
    std::size_t sample_count = 0;
    std::size_t truncated_count = 0;  // replications lost to overflow
    double sigma_hat = std::numeric_limits<double>::quiet_NaN();
    double var_shat_sq = std::numeric_limits<double>::quiet_NaN();
};

struct GradientStats {
    std::vector<LayerStats> layers;  // l = 1..L
};

// Ordered reduction over replication index; identical output for any
// thread count.
inline GradientStats estimate(const std::vector<ReplicationResult>& reps,
                              const NetworkSpec& spec) {
    if (reps.size() < 2)
        throw std::invalid_argument("estimate: needs >= 2 replications");
    const std::size_t L = spec.num_layers();
    GradientStats stats;
    stats.layers.resize(L);
    for (std::size_t l = 0; l < L; ++l) {
        LayerStats& ls = stats.layers[l];
        ls.layer = l + 1;
        Moments pooled;
        Moments shat_pooled;
        std::vector<double> rep_vars;
        double sigma_sum = 0.0;
        std::size_t sigma_n = 0;
        for (const ReplicationResult& r : reps) {
            if (r.truncated[l]) {
                ++ls.truncated_count;
                continue;
            }
            pooled.n += r.grad[l].n;
            pooled.sum += r.grad[l].sum;
            pooled.sumsq += r.grad[l].sumsq;
            rep_vars.push_back(r.grad[l].variance_unbiased());
            if (spec.batchnorm) {
                sigma_sum += r.sigma_mean[l];
                ++sigma_n;
                shat_pooled.n += r.shat_sq[l].n;
                shat_pooled.sum += r.shat_sq[l].sum;
                shat_pooled.sumsq += r.shat_sq[l].sumsq;
            }
        }
        ls.sample_count = pooled.n;
        ls.empirical_var = pooled.variance_unbiased();
        if (rep_vars.size() >= 2)
            ls.stderr_ = std::sqrt(sample_variance(rep_vars) /
                                   static_cast<double>(rep_vars.size()));
        if (sigma_n > 0) {
            ls.sigma_hat = sigma_sum / static_cast<double>(sigma_n);
            ls.var_shat_sq = shat_pooled.variance_unbiased();
        }
    }
    return stats;
}

inline std::size_t resolve_thread_count(std::size_t requested) {
    if (requested != 0) return requested;
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : hc;
}

// Full Monte Carlo run. Replications are independent given their stream
// ids, so they are distributed over threads round-robin and reduced in
// replication order.
inline GradientStats run_experiment(const ExperimentConfig& config,
                                    std::size_t threads = 0) {
    config.validate();
    const std::size_t R = config.replications;
    const std::size_t n_threads = std::min(resolve_thread_count(threads), R);

    std::optional<Network> shared;
    if (config.resample == ResampleMode::DataOnly) {
        RngStream rng(config.master_seed, stream_ids::kSharedWeights);
        shared = build_network(config.spec, rng, config.epsilon_bn);
    }

    std::vector<ReplicationResult> results(R);
    auto worker = [&](std::size_t t) {
        for (std::size_t rep = t; rep < R; rep += n_threads) {
            if (shared) {
                results[rep] = run_replication(*shared, config, rep);
            } else {
                RngStream rng(config.master_seed, stream_ids::weights(rep));
                const Network net = build_network(config.spec, rng,
                                                  config.epsilon_bn);
                results[rep] = run_replication(net, config, rep);
            }
        }
    };
    if (n_threads <= 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker, t);
        for (std::thread& th : pool) th.join();
    }
    return estimate(results, config.spec);
}

struct ComparisonRow {
    std::size_t layer = 0;  // ratio of layer l vs l+1
    double measured_ratio = 0.0;
    double predicted_ratio = 0.0;
    double rel_dev = 0.0;
    bool pass = false;
    std::string formula_id;
};

struct ComparisonReport {
    std::vector<ComparisonRow> rows;  // l = 1..L-1
    double tolerance = 0.0;

    bool all_pass() const {
        for (const ComparisonRow& r : rows)
            if (!r.pass) return false;
        return true;
    }
};

// Per-layer measured vs predicted variance ratios. Ratios, not absolute
// variances, are the comparison unit: the claims under test are per-layer
// amplification factors.
inline ComparisonReport compare(const GradientStats& stats,
                                const PredictionReport& prediction,
                                double tolerance) {
    if (stats.layers.size() != prediction.layers.size())
        throw std::invalid_argument("compare: layer counts disagree (" +
                                    std::to_string(stats.layers.size()) + " vs " +
                                    std::to_string(prediction.layers.size()) + ")");
    const std::size_t L = stats.layers.size();
    if (L < 2) throw std::invalid_argument("compare: needs >= 2 layers");
    ComparisonReport report;
    report.tolerance = tolerance;
    for (std::size_t l = 1; l < L; ++l) {
        ComparisonRow row;
        row.layer = l;
        row.measured_ratio = stats.layers[l - 1].empirical_var /
                             stats.layers[l].empirical_var;
        row.predicted_ratio = prediction.layers[l - 1].predicted_ratio;
        row.formula_id = prediction.layers[l - 1].formula_id;
        row.rel_dev = std::abs(row.measured_ratio - row.predicted_ratio) /
                      row.predicted_ratio;
        row.pass = std::isfinite(row.rel_dev) && row.rel_dev <= tolerance;
        report.rows.push_back(row);
    }
    return report;
}

}  // namespace qnorm
