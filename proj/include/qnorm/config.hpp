#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "qnorm/experiment.hpp"

namespace qnorm {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string to_string(QuantMode m) {
    switch (m) {
        case QuantMode::FullPrecision: return "full_precision";
        case QuantMode::Binary: return "binary";
        case QuantMode::Ternary: return "ternary";
    }
    return "?";
}

inline std::string to_string(InitScheme s) {
    switch (s) {
        case InitScheme::UniformHe2: return "uniform_he2";
        case InitScheme::UniformFan1: return "uniform_fan1";
        case InitScheme::NormalHe2: return "normal_he2";
        case InitScheme::NormalFan1: return "normal_fan1";
    }
    return "?";
}

inline std::string to_string(ResampleMode m) {
    return m == ResampleMode::DataOnly ? "data_only" : "weights_and_data";
}

inline QuantMode parse_quant_mode(const std::string& s) {
    if (s == "full_precision") return QuantMode::FullPrecision;
    if (s == "binary") return QuantMode::Binary;
    if (s == "ternary") return QuantMode::Ternary;
    throw ConfigError("field 'quant_mode': unknown value '" + s +
                      "' (expected full_precision|binary|ternary)");
}

inline InitScheme parse_init_scheme(const std::string& s) {
    if (s == "uniform_he2") return InitScheme::UniformHe2;
    if (s == "uniform_fan1") return InitScheme::UniformFan1;
    if (s == "normal_he2") return InitScheme::NormalHe2;
    if (s == "normal_fan1") return InitScheme::NormalFan1;
    throw ConfigError("field 'init': unknown value '" + s +
                      "' (expected uniform_he2|uniform_fan1|normal_he2|normal_fan1)");
}

inline ResampleMode parse_resample_mode(const std::string& s) {
    if (s == "weights_and_data") return ResampleMode::WeightsAndData;
    if (s == "data_only") return ResampleMode::DataOnly;
    throw ConfigError("field 'resample': unknown value '" + s +
                      "' (expected weights_and_data|data_only)");
}

namespace detail {

template <typename T>
T get_field(const nlohmann::json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("field '" + key + "': " + e.what());
    }
}

}  // namespace detail

// Flat JSON document mirroring ExperimentConfig + NetworkSpec. Unknown
// keys are rejected and every NetworkSpec invariant is re-validated.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    static const std::set<std::string> known = {
        "widths", "quant_mode", "batchnorm", "batch_size", "init",
        "sign_activations", "var_x", "var_gl", "replications", "seed",
        "resample", "epsilon_bn", "tolerance"};
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw ConfigError("unknown field '" + key + "'");
    for (const char* req : {"widths", "quant_mode", "batchnorm", "batch_size"})
        if (!j.contains(req))
            throw ConfigError(std::string("missing required field '") + req + "'");

    ExperimentConfig cfg;
    cfg.spec.widths = detail::get_field<std::vector<std::size_t>>(j, "widths", {});
    cfg.spec.quant_mode =
        parse_quant_mode(detail::get_field<std::string>(j, "quant_mode", ""));
    cfg.spec.batchnorm = detail::get_field<bool>(j, "batchnorm", false);
    cfg.spec.batch_size = detail::get_field<std::size_t>(j, "batch_size", 0);
    cfg.spec.init = parse_init_scheme(
        detail::get_field<std::string>(j, "init", "uniform_he2"));
    cfg.spec.sign_activations = detail::get_field<bool>(j, "sign_activations", false);
    cfg.spec.var_x = detail::get_field<double>(j, "var_x", 1.0);
    cfg.spec.var_gl = detail::get_field<double>(j, "var_gl", 1.0);
    cfg.replications = detail::get_field<std::size_t>(j, "replications", 2);
    cfg.master_seed = detail::get_field<std::uint64_t>(j, "seed", 0);
    cfg.resample = parse_resample_mode(
        detail::get_field<std::string>(j, "resample", "weights_and_data"));
    cfg.epsilon_bn = detail::get_field<double>(j, "epsilon_bn", 1e-8);
    cfg.tolerance = detail::get_field<double>(j, "tolerance", 0.15);

    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    return nlohmann::json{{"widths", cfg.spec.widths},
                          {"quant_mode", to_string(cfg.spec.quant_mode)},
                          {"batchnorm", cfg.spec.batchnorm},
                          {"batch_size", cfg.spec.batch_size},
                          {"init", to_string(cfg.spec.init)},
                          {"sign_activations", cfg.spec.sign_activations},
                          {"var_x", cfg.spec.var_x},
                          {"var_gl", cfg.spec.var_gl},
                          {"replications", cfg.replications},
                          {"seed", cfg.master_seed},
                          {"resample", to_string(cfg.resample)},
                          {"epsilon_bn", cfg.epsilon_bn},
                          {"tolerance", cfg.tolerance}};
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    return config_from_json(j);
}

// FNV-1a over the canonical (key-sorted) serialization.
inline std::string config_hash(const ExperimentConfig& cfg) {
    const std::string canon = config_to_json(cfg).dump();
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : canon) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    std::ostringstream out;
    out << std::hex << h;
    return out.str();
}

}  // namespace qnorm
