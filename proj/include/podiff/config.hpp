#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "podiff/advdiff.hpp"
#include "podiff/baselines.hpp"
#include "podiff/denoiser.hpp"
#include "podiff/diffusion.hpp"

namespace podiff {

struct DataSection {
    DatasetConfig dataset;
    std::uint64_t seed = 0;
};

struct PodSection {
    /// Either an explicit K list or eta (selects one K from the spectrum).
    std::vector<std::size_t> k_values{10, 20, 40};
    std::optional<double> eta;
};

struct DiffusionSection {
    std::size_t timesteps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    std::size_t hidden = 256;
    std::size_t blocks = 4;
    std::size_t embed_dim = 256;
    double lr = 2e-4;
    double weight_decay = 0.01;
    std::size_t batch_size = 128;
    std::size_t epochs = 400;
    std::size_t sampler_steps = 100;
    std::size_t members = 100;
    PosteriorVariance posterior = PosteriorVariance::kLower;
    /// Fraction of training trajectories held out for checkpoint selection.
    double validation_fraction = 0.1;
    /// Standardize the conditioning coefficients with their own statistics.
    bool separate_conditioning_stats = true;
};

struct BaselineSection {
    RbfOptions rbf;
};

struct MetricsSection {
    std::vector<double> levels{0.5, 0.7, 0.9, 0.95};
    double extreme_quantile = 0.9;
    /// Number of test snapshots evaluated (0 = all).
    std::size_t cases = 20;
    std::vector<std::size_t> sweep_sizes{50, 100, 200};
    bool fair_crps = false;
};

struct ExperimentConfig {
    DataSection data;
    PodSection pod;
    DiffusionSection diffusion;
    BaselineSection baselines;
    MetricsSection metrics;
    std::filesystem::path output = "run";

    /// Throws ConfigError on any violated constraint.
    void validate() const;
    MlpConfig mlp_config(std::size_t k) const;
    TrainConfig train_config() const;
};

/// Parse TOML text. Every key is optional; unknown keys and wrong types raise ConfigError.
ExperimentConfig parse_config(const std::string& toml_text, const std::string& source = "<string>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Full snapshot including every defaulted value.
nlohmann::json config_to_json(const ExperimentConfig& cfg);
/// TOML text that parses back to the same configuration.
std::string config_to_toml(const ExperimentConfig& cfg);

}  // namespace podiff
