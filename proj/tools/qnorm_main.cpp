// Command-line front end for the BatchNorm gradient-variance laboratory.
//
// Subcommands:
//   predict     closed-form per-layer variance predictions for a config
//   simulate    Monte Carlo measurement of per-layer gradient variances
//   compare     predict + simulate, per-layer pass/fail at a tolerance
//   fold-check  brute-force check of the BatchNorm-to-bias folding identity
//
// Exit codes: 0 success/pass, 1 comparison failure, 2 usage/config error.

#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "qnorm/config.hpp"
#include "qnorm/experiment.hpp"
#include "qnorm/report.hpp"
#include "qnorm/theory.hpp"

namespace {

using namespace qnorm;

std::size_t env_thread_count() {
    const char* env = std::getenv("QNORM_THREADS");
    if (env == nullptr || *env == '\0') return 0;
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end == nullptr || *end != '\0') {
        std::cerr << "warning: ignoring malformed QNORM_THREADS='" << env
                  << "'\n";
        return 0;
    }
    return static_cast<std::size_t>(v);
}

struct CommonOpts {
    std::string config_path;
    std::string format = "table";
    std::string out_path;
    std::string plot_data_path;
    std::uint64_t seed_override = 0;
    bool seed_set = false;
    std::size_t reps_override = 0;
    bool reps_set = false;
    double tolerance_override = 0.0;
    bool tolerance_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool with_plot_data) {
    cmd->add_option("--config", opts.config_path, "JSON experiment config")
        ->required();
    cmd->add_option("--format", opts.format, "output format")
        ->check(CLI::IsMember({"table", "csv", "json"}));
    cmd->add_option("--out", opts.out_path, "machine-readable output file");
    if (with_plot_data)
        cmd->add_option("--plot-data", opts.plot_data_path,
                        "write (layer, measured, predicted) CSV");
    cmd->add_option("--seed", opts.seed_override, "override master seed")
        ->each([&opts](const std::string&) { opts.seed_set = true; });
    cmd->add_option("--reps", opts.reps_override, "override replication count")
        ->each([&opts](const std::string&) { opts.reps_set = true; });
    cmd->add_option("--tolerance", opts.tolerance_override,
                    "override relative tolerance")
        ->each([&opts](const std::string&) { opts.tolerance_set = true; });
}

ExperimentConfig load_with_overrides(const CommonOpts& opts) {
    ExperimentConfig cfg = load_config(opts.config_path);
    if (opts.seed_set) cfg.master_seed = opts.seed_override;
    if (opts.reps_set) cfg.replications = opts.reps_override;
    if (opts.tolerance_set) cfg.tolerance = opts.tolerance_override;
    cfg.validate();
    return cfg;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open output file: " + path);
    return out;
}

void emit_machine(const CommonOpts& opts, const nlohmann::json& as_json,
                  const std::function<void(std::ostream&)>& as_csv) {
    if (opts.out_path.empty()) {
        if (opts.format != "table")
            throw ConfigError("--format " + opts.format + " requires --out");
        return;
    }
    std::ofstream out = open_out(opts.out_path);
    if (opts.format == "json")
        out << as_json.dump(2) << '\n';
    else
        as_csv(out);
}

void print_ternary_summary(const NetworkSpec& spec) {
    std::cout << "ternary quantization summary:\n";
    for (std::size_t l = 1; l <= spec.num_layers(); ++l) {
        const std::size_t fan_in = spec.widths[l - 1];
        const double delta = ternary_threshold(spec.init, fan_in);
        const double var_wt = ternary_weight_variance(delta, fan_in);
        const SparsityReport sp = sparsity_feasibility(delta, fan_in);
        std::cout << "  layer " << l << ": delta=" << format_real(delta)
                  << " var_wt=" << format_real(var_wt)
                  << " zero_fraction=" << format_real(sp.fraction_zero)
                  << (sp.feasible ? " feasible" : " INFEASIBLE") << '\n';
    }
}

int cmd_predict(const CommonOpts& opts) {
    const ExperimentConfig cfg = load_with_overrides(opts);
    const RunMetadata meta{config_hash(cfg), cfg.master_seed};
    const PredictionReport report = predict_backward_var(cfg.spec);

    std::cout << "prediction (config_hash=" << meta.config_hash
              << " seed=" << meta.master_seed << ")\n";
    std::cout << "layer  predicted_var          predicted_ratio        formula\n";
    for (const LayerPrediction& p : report.layers)
        std::cout << std::left << std::setw(7) << p.layer << std::setw(23)
                  << format_real(p.predicted_var) << std::setw(23)
                  << format_real(p.predicted_ratio) << p.formula_id << '\n';
    if (cfg.spec.quant_mode == QuantMode::Ternary)
        print_ternary_summary(cfg.spec);
    if (cfg.spec.batchnorm)
        std::cout << "note: width-ratio predictions hold up to a deviation "
                     "that shrinks as the batch size grows\n";

    emit_machine(opts, prediction_to_json(report, meta),
                 [&](std::ostream& out) {
                     write_prediction_csv(out, report, meta);
                 });
    return 0;
}

void print_stats_table(const GradientStats& stats, bool batchnorm) {
    std::cout << "layer  empirical_var          stderr                 "
                 "truncated\n";
    for (const LayerStats& ls : stats.layers)
        std::cout << std::left << std::setw(7) << ls.layer << std::setw(23)
                  << format_real(ls.empirical_var) << std::setw(23)
                  << format_real(ls.stderr_) << ls.truncated_count << '\n';
    if (batchnorm) {
        std::cout << "layer  sigma_hat              var_shat_sq\n";
        for (const LayerStats& ls : stats.layers)
            std::cout << std::left << std::setw(7) << ls.layer << std::setw(23)
                      << format_real(ls.sigma_hat) << format_real(ls.var_shat_sq)
                      << '\n';
    }
}

int cmd_simulate(const CommonOpts& opts) {
    const ExperimentConfig cfg = load_with_overrides(opts);
    const RunMetadata meta{config_hash(cfg), cfg.master_seed};
    const GradientStats stats = run_experiment(cfg, env_thread_count());

    std::cout << "simulation (config_hash=" << meta.config_hash
              << " seed=" << meta.master_seed << " R=" << cfg.replications
              << ")\n";
    print_stats_table(stats, cfg.spec.batchnorm);
    for (const LayerStats& ls : stats.layers)
        if (ls.truncated_count > 0)
            std::cout << "note: layer " << ls.layer << " overflowed in "
                      << ls.truncated_count << " replication(s)\n";

    emit_machine(opts, stats_to_json(stats, meta), [&](std::ostream& out) {
        write_stats_csv(out, stats, meta);
    });
    return 0;
}

PredictionReport predict_for_compare(const ExperimentConfig& cfg,
                                     const GradientStats& stats) {
    // Full-precision BatchNorm predictions use the measured sigma-hat and
    // Var(shat^2); everything else is closed-form in the config alone.
    if (cfg.spec.quant_mode == QuantMode::FullPrecision && cfg.spec.batchnorm) {
        std::vector<double> sigmas;
        double vss_sum = 0.0;
        for (const LayerStats& ls : stats.layers) {
            sigmas.push_back(ls.sigma_hat);
            vss_sum += ls.var_shat_sq;
        }
        const double vss = vss_sum / static_cast<double>(stats.layers.size());
        return predict_backward_var_fp_bn(cfg.spec, sigmas, vss,
                                          "fp_bn_eq2_measured_sigma");
    }
    return predict_backward_var(cfg.spec);
}

int cmd_compare(const CommonOpts& opts) {
    const ExperimentConfig cfg = load_with_overrides(opts);
    const RunMetadata meta{config_hash(cfg), cfg.master_seed};
    const GradientStats stats = run_experiment(cfg, env_thread_count());
    const PredictionReport prediction = predict_for_compare(cfg, stats);
    const ComparisonReport report = compare(stats, prediction, cfg.tolerance);

    std::cout << "comparison (config_hash=" << meta.config_hash
              << " seed=" << meta.master_seed
              << " tolerance=" << format_real(cfg.tolerance) << ")\n";
    std::cout << "layer  measured_ratio         predicted_ratio        "
                 "rel_dev                pass\n";
    for (const ComparisonRow& r : report.rows)
        std::cout << std::left << std::setw(7) << r.layer << std::setw(23)
                  << format_real(r.measured_ratio) << std::setw(23)
                  << format_real(r.predicted_ratio) << std::setw(23)
                  << format_real(r.rel_dev) << (r.pass ? "pass" : "FAIL")
                  << '\n';
    std::cout << (report.all_pass() ? "result: PASS" : "result: FAIL") << '\n';

    emit_machine(opts, comparison_to_json(report, meta),
                 [&](std::ostream& out) {
                     write_comparison_csv(out, report, meta);
                 });
    if (!opts.plot_data_path.empty()) {
        std::ofstream out = open_out(opts.plot_data_path);
        write_plot_data_csv(out, report, meta);
    }
    return report.all_pass() ? 0 : 1;
}

struct FoldCheckOpts {
    std::uint64_t seed = 0;
    std::size_t batch = 32;
    std::size_t width = 16;
    std::size_t trials = 1000;
    bool allow_negative_gamma = false;
};

// Brute-force the fold identity sign(BN(s)) = sign(s - b) with
// b = mu - (sigma/gamma) * beta, over random batches and random gamma > 0.
// The debug flag draws gamma over both signs to demonstrate the identity
// breaking without the gamma > 0 precondition.
int cmd_fold_check(const FoldCheckOpts& opts) {
    if (opts.trials == 0) {
        std::cout << "warning: trials=0, vacuous pass\n";
        std::cout << "mismatches: 0 / 0 elements\n";
        return 0;
    }
    RngStream rng(opts.seed, 0x0f01dull);
    std::size_t mismatches = 0;
    std::size_t elements = 0;
    for (std::size_t t = 0; t < opts.trials; ++t) {
        const Matrix s = sample_normal(rng, 0.0, 1.0, opts.batch, opts.width);
        BatchNormLayer bn(opts.width, 0.0);
        for (std::size_t k = 0; k < opts.width; ++k) {
            bn.gamma[k] = opts.allow_negative_gamma ? rng.uniform(-2.0, 2.0)
                                                    : rng.uniform(0.1, 2.0);
            if (bn.gamma[k] == 0.0) bn.gamma[k] = 0.1;
            bn.beta[k] = rng.normal(0.0, 1.0);
        }
        const BatchNormForward fwd = batchnorm_forward(s, bn);
        const std::vector<double> bias = fold_batchnorm_bias(fwd.cache, bn);
        for (std::size_t i = 0; i < opts.batch; ++i)
            for (std::size_t k = 0; k < opts.width; ++k) {
                ++elements;
                if (sign_pos(fwd.z(i, k)) != sign_pos(s(i, k) - bias[k]))
                    ++mismatches;
            }
    }
    std::cout << "mismatches: " << mismatches << " / " << elements
              << " elements over " << opts.trials << " trials\n";
    return mismatches == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"BatchNorm gradient-variance laboratory"};
    app.require_subcommand(1);

    CommonOpts predict_opts, simulate_opts, compare_opts;
    FoldCheckOpts fold_opts;

    add_common(app.add_subcommand("predict", "closed-form predictions"),
               predict_opts, false);
    add_common(app.add_subcommand("simulate", "Monte Carlo measurement"),
               simulate_opts, false);
    add_common(app.add_subcommand("compare", "predictions vs measurement"),
               compare_opts, true);

    CLI::App* fold = app.add_subcommand("fold-check",
                                        "BatchNorm-to-bias folding identity");
    fold->add_option("--seed", fold_opts.seed, "RNG seed");
    fold->add_option("--batch", fold_opts.batch, "batch size B")
        ->check(CLI::Range(std::size_t{2}, std::size_t{1} << 20));
    fold->add_option("--width", fold_opts.width, "layer width K")
        ->check(CLI::PositiveNumber);
    fold->add_option("--trials", fold_opts.trials, "number of random batches");
    fold->add_flag("--allow-negative-gamma", fold_opts.allow_negative_gamma,
                   "debug: draw gamma over both signs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand("predict")) return cmd_predict(predict_opts);
        if (app.got_subcommand("simulate")) return cmd_simulate(simulate_opts);
        if (app.got_subcommand("compare")) return cmd_compare(compare_opts);
        return cmd_fold_check(fold_opts);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
