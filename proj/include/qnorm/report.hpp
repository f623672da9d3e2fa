#pragma once

#include <cstdio>
#include <ostream>
#include <string>

#include <json.hpp>

#include "qnorm/config.hpp"
#include "qnorm/experiment.hpp"
#include "qnorm/theory.hpp"

namespace qnorm {

// Full round-trip precision, '.' decimal separator, locale-independent.
inline std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct RunMetadata {
    std::string config_hash;
    std::uint64_t master_seed = 0;
};

inline void write_metadata_header(std::ostream& out, const RunMetadata& meta) {
    out << "# config_hash=" << meta.config_hash << "\n"
        << "# seed=" << meta.master_seed << "\n";
}

inline void write_stats_csv(std::ostream& out, const GradientStats& stats,
                            const RunMetadata& meta) {
    write_metadata_header(out, meta);
    out << "layer,empirical_var,stderr,sigma_hat,var_shat_sq,truncated_count\n";
    for (const LayerStats& ls : stats.layers)
        out << ls.layer << ',' << format_real(ls.empirical_var) << ','
            << format_real(ls.stderr_) << ',' << format_real(ls.sigma_hat) << ','
            << format_real(ls.var_shat_sq) << ',' << ls.truncated_count << '\n';
}

inline void write_prediction_csv(std::ostream& out,
                                 const PredictionReport& report,
                                 const RunMetadata& meta) {
    write_metadata_header(out, meta);
    out << "layer,predicted_var,predicted_ratio,formula_id\n";
    for (const LayerPrediction& p : report.layers)
        out << p.layer << ',' << format_real(p.predicted_var) << ','
            << format_real(p.predicted_ratio) << ',' << p.formula_id << '\n';
}

inline void write_comparison_csv(std::ostream& out,
                                 const ComparisonReport& report,
                                 const RunMetadata& meta) {
    write_metadata_header(out, meta);
    out << "layer,measured_ratio,predicted_ratio,rel_dev,pass\n";
    for (const ComparisonRow& r : report.rows)
        out << r.layer << ',' << format_real(r.measured_ratio) << ','
            << format_real(r.predicted_ratio) << ',' << format_real(r.rel_dev)
            << ',' << (r.pass ? 1 : 0) << '\n';
}

// (layer, measured, predicted) series for external plotting.
inline void write_plot_data_csv(std::ostream& out,
                                const ComparisonReport& report,
                                const RunMetadata& meta) {
    write_metadata_header(out, meta);
    out << "layer,measured,predicted\n";
    for (const ComparisonRow& r : report.rows)
        out << r.layer << ',' << format_real(r.measured_ratio) << ','
            << format_real(r.predicted_ratio) << '\n';
}

inline nlohmann::json prediction_to_json(const PredictionReport& report,
                                         const RunMetadata& meta) {
    nlohmann::json layers = nlohmann::json::array();
    for (const LayerPrediction& p : report.layers)
        layers.push_back({{"layer", p.layer},
                          {"predicted_var", p.predicted_var},
                          {"predicted_ratio", p.predicted_ratio},
                          {"formula_id", p.formula_id}});
    return {{"config_hash", meta.config_hash},
            {"seed", meta.master_seed},
            {"layers", layers}};
}

inline nlohmann::json stats_to_json(const GradientStats& stats,
                                    const RunMetadata& meta) {
    nlohmann::json layers = nlohmann::json::array();
    for (const LayerStats& ls : stats.layers) {
        nlohmann::json entry = {{"layer", ls.layer},
                                {"empirical_var", ls.empirical_var},
                                {"stderr", ls.stderr_},
                                {"sample_count", ls.sample_count},
                                {"truncated_count", ls.truncated_count}};
        if (std::isfinite(ls.sigma_hat)) {
            entry["sigma_hat"] = ls.sigma_hat;
            entry["var_shat_sq"] = ls.var_shat_sq;
        }
        layers.push_back(entry);
    }
    return {{"config_hash", meta.config_hash},
            {"seed", meta.master_seed},
            {"layers", layers}};
}

inline nlohmann::json comparison_to_json(const ComparisonReport& report,
                                         const RunMetadata& meta) {
    nlohmann::json rows = nlohmann::json::array();
    for (const ComparisonRow& r : report.rows)
        rows.push_back({{"layer", r.layer},
                        {"measured_ratio", r.measured_ratio},
                        {"predicted_ratio", r.predicted_ratio},
                        {"rel_dev", r.rel_dev},
                        {"pass", r.pass},
                        {"formula_id", r.formula_id}});
    return {{"config_hash", meta.config_hash},
            {"seed", meta.master_seed},
            {"tolerance", report.tolerance},
            {"all_pass", report.all_pass()},
            {"rows", rows}};
}

}  // namespace qnorm
