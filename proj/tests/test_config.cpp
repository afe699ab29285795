#include <doctest.h>

#include <string>

#include "podiff/config.hpp"
#include "podiff/error.hpp"

using namespace podiff;

TEST_SUITE("config") {

TEST_CASE("empty document gives the documented defaults") {
    const ExperimentConfig c = parse_config("");
    CHECK(c.data.dataset.n_traj == 500);
    CHECK(c.data.dataset.nx == 128);
    CHECK(c.data.dataset.factor == 4);
    CHECK(c.data.dataset.steps == std::vector<std::size_t>{50, 100, 150, 200});
    CHECK(c.pod.k_values == std::vector<std::size_t>{10, 20, 40});
    CHECK(c.diffusion.timesteps == 1000);
    CHECK(c.diffusion.sampler_steps == 100);
    CHECK(c.diffusion.members == 100);
    CHECK(c.diffusion.lr == 2e-4);
    CHECK(c.diffusion.posterior == PosteriorVariance::kLower);
    CHECK(c.baselines.rbf.kernel == RbfKernel::kThinPlate);
    CHECK(c.metrics.levels == std::vector<double>{0.5, 0.7, 0.9, 0.95});
    CHECK(c.mlp_config(40).parameter_count() == 623144);
}

TEST_CASE("explicit values") {
    const ExperimentConfig c = parse_config(R"(
output = "out/x"
[data]
seed = 9
n_traj = 20
grid = 32
spectrum_width = 2.0
[pod]
eta = 0.99
[diffusion]
posterior_variance = "upper"
epochs = 3
[baselines]
kernel = "gaussian"
length_scale = 0.2
[metrics]
levels = [0.5, 0.9]
fair_crps = true
)");
    CHECK(c.output == "out/x");
    CHECK(c.data.seed == 9);
    CHECK(c.data.dataset.nx == 32);
    CHECK(c.data.dataset.ny == 32);
    CHECK(c.data.dataset.spectrum.width == 2.0);
    REQUIRE(c.pod.eta.has_value());
    CHECK(*c.pod.eta == 0.99);
    CHECK(c.diffusion.posterior == PosteriorVariance::kUpper);
    CHECK(c.baselines.rbf.kernel == RbfKernel::kGaussian);
    CHECK(c.metrics.fair_crps);
}

TEST_CASE("unknown keys, wrong types and invalid values are config errors") {
    CHECK_THROWS_AS(parse_config("[data]\nseeed = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[dataa]\nseed = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("bogus = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[diffusion]\nepochs = \"many\"\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[data]\ngrid = 48\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[diffusion]\nsampler_steps = 2000\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[metrics]\nlevels = [0.9, 0.5]\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[data]\nn_traj = -4\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[diffusion\n"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/podiff.toml"), ConfigError);
}

TEST_CASE("TOML export round-trips") {
    ExperimentConfig c = parse_config("[data]\nseed = 4\n[pod]\nk = [8, 16]\n[diffusion]\nlr = 3.3e-4\n");
    const ExperimentConfig back = parse_config(config_to_toml(c));
    CHECK(config_to_json(back) == config_to_json(c));
    CHECK(config_to_json(c)["diffusion"]["lr"] == 3.3e-4);
}

TEST_CASE("shipped configs parse") {
    for (const char* name : {"smoke", "reduced", "benchmark"}) {
        CAPTURE(name);
        const ExperimentConfig c = load_config(std::string(PODIFF_SOURCE_DIR) + "/configs/" + name + ".toml");
        CHECK_NOTHROW(c.validate());
    }
    const ExperimentConfig b = load_config(std::string(PODIFF_SOURCE_DIR) + "/configs/benchmark.toml");
    CHECK(config_to_json(b)["data"] == config_to_json(ExperimentConfig{})["data"]);
}

}
