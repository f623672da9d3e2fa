// pybind11 surface for the BatchNorm gradient-variance laboratory.
// Matrices cross the boundary as 2-D float64 numpy arrays; experiment
// configs cross as JSON strings matching the CLI config schema.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "qnorm/config.hpp"
#include "qnorm/experiment.hpp"
#include "qnorm/layers.hpp"
#include "qnorm/report.hpp"
#include "qnorm/rng.hpp"
#include "qnorm/theory.hpp"

namespace py = pybind11;
using namespace qnorm;

namespace {

Matrix to_matrix(const py::array_t<double, py::array::c_style |
                                               py::array::forcecast>& arr) {
    if (arr.ndim() != 2) throw std::invalid_argument("expected a 2-D array");
    const auto rows = static_cast<std::size_t>(arr.shape(0));
    const auto cols = static_cast<std::size_t>(arr.shape(1));
    std::vector<double> data(arr.data(), arr.data() + rows * cols);
    return Matrix::from_external(rows, cols, std::move(data));
}

py::array_t<double> from_matrix(const Matrix& m) {
    py::array_t<double> arr(std::vector<py::ssize_t>{
        static_cast<py::ssize_t>(m.rows()), static_cast<py::ssize_t>(m.cols())});
    std::copy(m.data().begin(), m.data().end(), arr.mutable_data());
    return arr;
}

QuantMode quant_mode_from_string(const std::string& s) {
    return parse_quant_mode(s);
}

py::dict json_to_dict(const nlohmann::json& j) {
    py::object loads = py::module_::import("json").attr("loads");
    return loads(j.dump());
}

ExperimentConfig config_from_string(const std::string& config_json) {
    return config_from_json(nlohmann::json::parse(config_json));
}

}  // namespace

PYBIND11_MODULE(_qnorm, m) {
    m.doc() = "BatchNorm gradient-variance laboratory core";

    m.def("matmul", [](const py::array_t<double>& a, const py::array_t<double>& b) {
        return from_matrix(matmul(to_matrix(a), to_matrix(b)));
    });

    m.def("sample_uniform",
          [](std::uint64_t seed, std::uint64_t stream, double lo, double hi,
             std::size_t rows, std::size_t cols) {
              RngStream rng(seed, stream);
              return from_matrix(sample_uniform(rng, lo, hi, rows, cols));
          },
          py::arg("seed"), py::arg("stream"), py::arg("lo"), py::arg("hi"),
          py::arg("rows"), py::arg("cols"));

    m.def("sample_normal",
          [](std::uint64_t seed, std::uint64_t stream, double mean, double sd,
             std::size_t rows, std::size_t cols) {
              RngStream rng(seed, stream);
              return from_matrix(sample_normal(rng, mean, sd, rows, cols));
          },
          py::arg("seed"), py::arg("stream"), py::arg("mean"), py::arg("sd"),
          py::arg("rows"), py::arg("cols"));

    m.def("effective_weights",
          [](const py::array_t<double>& w, const std::string& mode,
             double delta) {
              DenseLayer layer(to_matrix(w), quant_mode_from_string(mode), delta);
              return from_matrix(effective_weights(layer));
          },
          py::arg("weights"), py::arg("mode"), py::arg("delta") = 0.0);

    m.def("batchnorm_forward",
          [](const py::array_t<double>& s, const std::vector<double>& gamma,
             const std::vector<double>& beta, double epsilon) {
              Matrix sm = to_matrix(s);
              BatchNormLayer bn(sm.cols(), epsilon);
              bn.gamma = gamma;
              bn.beta = beta;
              BatchNormForward f = batchnorm_forward(sm, bn);
              return py::make_tuple(from_matrix(f.z), f.cache.mu, f.cache.sigma,
                                    from_matrix(f.cache.s_hat));
          },
          py::arg("s"), py::arg("gamma"), py::arg("beta"),
          py::arg("epsilon") = 0.0);

    m.def("batchnorm_backward",
          [](const py::array_t<double>& grad_z, const std::vector<double>& mu,
             const std::vector<double>& sigma, const py::array_t<double>& s_hat,
             const std::vector<double>& gamma, const std::vector<double>& beta,
             double epsilon) {
              BatchNormLayer bn(gamma.size(), epsilon);
              bn.gamma = gamma;
              bn.beta = beta;
              BatchNormCache cache{mu, sigma, to_matrix(s_hat)};
              BatchNormGrads g = batchnorm_backward(to_matrix(grad_z), cache, bn);
              return py::make_tuple(from_matrix(g.grad_s), g.grad_gamma,
                                    g.grad_beta);
          },
          py::arg("grad_z"), py::arg("mu"), py::arg("sigma"), py::arg("s_hat"),
          py::arg("gamma"), py::arg("beta"), py::arg("epsilon") = 0.0);

    m.def("ternary_threshold",
          [](std::size_t k) { return ternary_threshold(k); }, py::arg("k"));
    m.def("ternary_weight_variance", &ternary_weight_variance,
          py::arg("delta"), py::arg("k"));
    m.def("predict_sigma_sq_ternary", &predict_sigma_sq_ternary,
          py::arg("k_prev"), py::arg("var_wt"));
    m.def("stabilization_factor", &stabilization_factor, py::arg("gamma"),
          py::arg("batch"), py::arg("var_shat_sq"));
    m.def("sparsity_feasibility",
          [](double delta, std::size_t k) {
              SparsityReport r = sparsity_feasibility(delta, k);
              return py::make_tuple(r.fraction_zero, r.feasible);
          },
          py::arg("delta"), py::arg("k"));

    m.def("predict",
          [](const std::string& config_json) {
              const ExperimentConfig cfg = config_from_string(config_json);
              const RunMetadata meta{config_hash(cfg), cfg.master_seed};
              return json_to_dict(
                  prediction_to_json(predict_backward_var(cfg.spec), meta));
          },
          py::arg("config_json"));

    m.def("simulate",
          [](const std::string& config_json, std::size_t threads) {
              const ExperimentConfig cfg = config_from_string(config_json);
              const RunMetadata meta{config_hash(cfg), cfg.master_seed};
              GradientStats stats;
              {
                  py::gil_scoped_release release;
                  stats = run_experiment(cfg, threads);
              }
              return json_to_dict(stats_to_json(stats, meta));
          },
          py::arg("config_json"), py::arg("threads") = 0);

    m.def("compare",
          [](const std::string& config_json, std::size_t threads) {
              const ExperimentConfig cfg = config_from_string(config_json);
              const RunMetadata meta{config_hash(cfg), cfg.master_seed};
              GradientStats stats;
              {
                  py::gil_scoped_release release;
                  stats = run_experiment(cfg, threads);
              }
              const ComparisonReport report =
                  compare(stats, predict_backward_var(cfg.spec), cfg.tolerance);
              return json_to_dict(comparison_to_json(report, meta));
          },
          py::arg("config_json"), py::arg("threads") = 0);

    m.def("config_hash", [](const std::string& config_json) {
        return config_hash(config_from_string(config_json));
    });
}
