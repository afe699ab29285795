#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "podiff/config.hpp"
#include "podiff/tensor.hpp"
#include "podiff/uq.hpp"

namespace podiff::pipeline {

namespace fs = std::filesystem;

inline constexpr const char* kToolVersion = "0.1.0";

/// Command-line overrides applied on top of the config file.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<fs::path> out;
    std::optional<std::vector<std::size_t>> cases;
    std::optional<std::string> method;  // podiff | randorth | podproj | rbf
    std::optional<std::size_t> k;
    std::optional<std::size_t> samples;
    std::optional<std::size_t> steps;
};

void apply_overrides(ExperimentConfig& cfg, const Overrides& o);

/// Shared state of one invocation: resolved config, output root and the manifest.
class Context {
public:
    Context(ExperimentConfig cfg, std::optional<std::vector<std::size_t>> cases = std::nullopt,
            std::optional<std::size_t> k = std::nullopt);

    const ExperimentConfig& config() const noexcept { return cfg_; }
    const fs::path& out() const noexcept { return cfg_.output; }
    const RngStream& root() const noexcept { return root_; }
    nlohmann::json& manifest() noexcept { return manifest_; }
    const std::optional<std::vector<std::size_t>>& case_override() const noexcept { return cases_; }
    /// Restricts train/sample/baseline to a single K.
    const std::optional<std::size_t>& k_override() const noexcept { return k_; }

    /// Child of the master stream, recorded in the manifest under its label.
    RngStream stream(const std::string& label);

    void begin_stage(const std::string& name);
    /// Fails with MissingPrerequisite when absent and CorruptArtifact when the
    /// hash differs from the one recorded when the file was produced.
    void require(const std::string& rel);
    void record_output(const std::string& rel);
    nlohmann::json& telemetry();
    void end_stage();

private:
    void save_manifest() const;

    ExperimentConfig cfg_;
    std::optional<std::vector<std::size_t>> cases_;
    std::optional<std::size_t> k_;
    RngStream root_;
    nlohmann::json manifest_;
    std::string stage_;
    double stage_start_ = 0.0;
};

/// Tag of a trained or evaluated method, e.g. "podiff_k40", "podproj_k20", "rbf".
std::string method_tag(const std::string& method, std::size_t k);

struct MethodResult {
    MetricReport report;
    std::vector<double> pooled_coverage;
    std::vector<SweepRow> sweep;
    double linear_uq_max_abs_diff = 0.0;  // NaN for deterministic methods
    std::size_t members = 0;              // 1 for deterministic methods
};

struct EvalSummary {
    std::vector<std::size_t> cases;
    std::map<std::string, MethodResult> methods;
};

void cmd_gen_data(Context& ctx);
void cmd_fit_pod(Context& ctx);
/// method is "podiff" or "randorth"; trains one model per K.
void cmd_train(Context& ctx, const std::string& method);
void cmd_sample(Context& ctx, const std::string& method);
/// method is "podproj" or "rbf".
void cmd_baseline(Context& ctx, const std::string& method);
EvalSummary cmd_evaluate(Context& ctx);
void cmd_report(Context& ctx);

/// Every stage for every method. With `method` set, only that method is trained,
/// sampled or predicted.
EvalSummary cmd_run(Context& ctx, const std::optional<std::string>& method = std::nullopt);

/// K values resolved by the fit-pod stage (explicit list or eta selection).
std::vector<std::size_t> resolved_k_values(const Context& ctx);

/// Test-snapshot indices evaluated by the sample, baseline and evaluate stages.
std::vector<std::size_t> selected_cases(Context& ctx);

}  // namespace podiff::pipeline
