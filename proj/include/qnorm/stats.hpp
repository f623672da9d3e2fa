#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "qnorm/matrix.hpp"

namespace qnorm {

enum class Divisor { Biased, Unbiased };  // B vs B-1

struct ColumnStats {
    std::vector<double> means;
    std::vector<double> vars;
};

// Per-column mean and variance. Divisor B (biased) is what BatchNorm uses
// internally; B-1 (unbiased) is for reporting.
inline ColumnStats column_stats(const Matrix& m, Divisor divisor) {
    const std::size_t b = m.rows(), k = m.cols();
    if (divisor == Divisor::Unbiased && b < 2)
        throw std::invalid_argument("column_stats: unbiased divisor needs rows >= 2");
    ColumnStats out;
    out.means.assign(k, 0.0);
    out.vars.assign(k, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < b; ++i) mean += m(i, j);
        mean /= static_cast<double>(b);
        double ss = 0.0;
        for (std::size_t i = 0; i < b; ++i) {
            const double d = m(i, j) - mean;
            ss += d * d;
        }
        const double div = divisor == Divisor::Biased
                               ? static_cast<double>(b)
                               : static_cast<double>(b - 1);
        out.means[j] = mean;
        out.vars[j] = ss / div;
    }
    return out;
}

// Unbiased variance of a flat sample, two-pass.
inline double sample_variance(std::span<const double> xs) {
    if (xs.size() < 2)
        throw std::invalid_argument("sample_variance: needs >= 2 samples");
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) {
        const double d = x - mean;
        ss += d * d;
    }
    return ss / static_cast<double>(xs.size() - 1);
}

struct PooledVariance {
    double var = 0.0;
    double stderr_ = 0.0;
};

// Pooled unbiased variance over all samples of all replications; the
// standard error comes from the spread of per-replication variances
// divided by the replication count.
inline PooledVariance pooled_variance(
    const std::vector<std::vector<double>>& replications) {
    std::size_t n = 0;
    for (const auto& rep : replications) n += rep.size();
    if (n < 2) throw std::invalid_argument("pooled_variance: needs >= 2 samples");

    double mean = 0.0;
    for (const auto& rep : replications)
        for (double x : rep) mean += x;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (const auto& rep : replications)
        for (double x : rep) {
            const double d = x - mean;
            ss += d * d;
        }
    PooledVariance out;
    out.var = ss / static_cast<double>(n - 1);

    if (replications.size() >= 2) {
        std::vector<double> rep_vars;
        rep_vars.reserve(replications.size());
        for (const auto& rep : replications)
            if (rep.size() >= 2) rep_vars.push_back(sample_variance(rep));
        if (rep_vars.size() >= 2)
            out.stderr_ = std::sqrt(sample_variance(rep_vars) /
                                    static_cast<double>(rep_vars.size()));
    }
    return out;
}

inline PooledVariance pooled_variance(std::span<const double> samples) {
    return {sample_variance(samples), 0.0};
}

}  // namespace qnorm
