#include <doctest.h>

#include <json.hpp>

#include "qnorm/config.hpp"

using namespace qnorm;
using nlohmann::json;

namespace {

json valid_config() {
    return json{{"widths", {16, 16, 16}},
                {"quant_mode", "binary"},
                {"batchnorm", true},
                {"batch_size", 32},
                {"init", "uniform_he2"},
                {"sign_activations", true},
                {"replications", 4},
                {"seed", 42}};
}

}  // namespace

TEST_CASE("valid config round-trips with a stable hash") {
    const ExperimentConfig cfg = config_from_json(valid_config());
    CHECK(cfg.spec.widths == std::vector<std::size_t>{16, 16, 16});
    CHECK(cfg.spec.quant_mode == QuantMode::Binary);
    CHECK(cfg.spec.batchnorm);
    CHECK(cfg.master_seed == 42);
    CHECK(cfg.replications == 4);
    // defaults
    CHECK(cfg.spec.var_x == 1.0);
    CHECK(cfg.resample == ResampleMode::WeightsAndData);
    CHECK(cfg.epsilon_bn == 1e-8);

    const ExperimentConfig again = config_from_json(config_to_json(cfg));
    CHECK(config_hash(cfg) == config_hash(again));

    ExperimentConfig other = cfg;
    other.master_seed = 43;
    CHECK(config_hash(cfg) != config_hash(other));
}

TEST_CASE("unknown keys are rejected") {
    json j = valid_config();
    j["widht"] = 1;
    CHECK_THROWS_WITH_AS(config_from_json(j), doctest::Contains("widht"),
                         ConfigError);
}

TEST_CASE("missing required fields name the field") {
    json j = valid_config();
    j.erase("widths");
    CHECK_THROWS_WITH_AS(config_from_json(j), doctest::Contains("widths"),
                         ConfigError);
}

TEST_CASE("bad enum values name the field") {
    json j = valid_config();
    j["init"] = "kaiming";
    CHECK_THROWS_WITH_AS(config_from_json(j), doctest::Contains("init"),
                         ConfigError);
    j = valid_config();
    j["quant_mode"] = "int8";
    CHECK_THROWS_WITH_AS(config_from_json(j), doctest::Contains("quant_mode"),
                         ConfigError);
}

TEST_CASE("NetworkSpec invariants are re-validated on load") {
    json j = valid_config();
    j["batch_size"] = 1;
    CHECK_THROWS_AS(config_from_json(j), ConfigError);
    j = valid_config();
    j["widths"] = {16};
    CHECK_THROWS_AS(config_from_json(j), ConfigError);
    j = valid_config();
    j["var_x"] = 0.0;
    CHECK_THROWS_AS(config_from_json(j), ConfigError);
    j = valid_config();
    j["replications"] = 1;
    CHECK_THROWS_AS(config_from_json(j), ConfigError);
}

TEST_CASE("type mismatches are reported as field errors") {
    json j = valid_config();
    j["batch_size"] = "many";
    CHECK_THROWS_WITH_AS(config_from_json(j), doctest::Contains("batch_size"),
                         ConfigError);
}
