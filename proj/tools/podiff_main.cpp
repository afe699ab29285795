#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "podiff/config.hpp"
#include "podiff/error.hpp"
#include "podiff/pipeline.hpp"

namespace {

struct Args {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::vector<std::size_t> cases;
    std::optional<std::string> method;
    std::optional<std::size_t> k;
    std::optional<std::size_t> samples;
    std::optional<std::size_t> steps;
};

void add_common(CLI::App* cmd, Args& a) {
    cmd->add_option("--config", a.config, "experiment config (TOML); defaults apply when omitted");
    cmd->add_option("--seed", a.seed, "master seed override");
    cmd->add_option("--out", a.out, "output directory override");
    cmd->add_option("--cases", a.cases, "test snapshot indices to sample and evaluate")->delimiter(',');
    cmd->add_option("--method", a.method, "podiff | randorth | podproj | rbf")
        ->check(CLI::IsMember({"podiff", "randorth", "podproj", "rbf"}));
    cmd->add_option("--k", a.k, "restrict to one latent dimension K")->check(CLI::PositiveNumber);
    cmd->add_option("--samples", a.samples, "ensemble members M")->check(CLI::PositiveNumber);
    cmd->add_option("--steps", a.steps, "sampler steps S")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"podiff: probabilistic super-resolution in POD coefficient space"};
    app.require_subcommand(1);
    Args args;

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"gen-data", "generate the advection-diffusion dataset"},
        {"fit-pod", "fit the POD basis on training snapshots"},
        {"train", "train the conditional denoiser (podiff or randorth)"},
        {"sample", "draw ensembles for the selected test cases"},
        {"baseline", "deterministic baseline predictions (podproj or rbf)"},
        {"evaluate", "metric, reliability and calibration outputs"},
        {"report", "aggregate summary and variance-spectrum export"},
        {"run", "every stage in order"},
        {"config", "print the resolved configuration as TOML"},
    };
    for (const auto& [name, help] : commands) add_common(app.add_subcommand(name, help), args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(podiff::ExitCode::kConfig);
    }

    const std::string cmd = app.get_subcommands().front()->get_name();
    try {
        podiff::ExperimentConfig cfg = args.config.empty() ? podiff::ExperimentConfig{} : podiff::load_config(args.config);
        podiff::pipeline::Overrides o;
        o.seed = args.seed;
        if (args.out) o.out = *args.out;
        o.k = args.k;
        o.samples = args.samples;
        o.steps = args.steps;
        podiff::pipeline::apply_overrides(cfg, o);
        if (cmd == "config") {
            std::cout << podiff::config_to_toml(cfg);
            return 0;
        }

        std::optional<std::vector<std::size_t>> cases;
        if (!args.cases.empty()) cases = args.cases;
        podiff::pipeline::Context ctx(cfg, cases, args.k);
        namespace pl = podiff::pipeline;
        if (cmd == "gen-data") {
            pl::cmd_gen_data(ctx);
        } else if (cmd == "fit-pod") {
            pl::cmd_fit_pod(ctx);
        } else if (cmd == "train") {
            pl::cmd_train(ctx, args.method.value_or("podiff"));
        } else if (cmd == "sample") {
            pl::cmd_sample(ctx, args.method.value_or("podiff"));
        } else if (cmd == "baseline") {
            if (!args.method) throw podiff::ConfigError("baseline needs --method podproj or --method rbf");
            pl::cmd_baseline(ctx, *args.method);
        } else if (cmd == "evaluate") {
            pl::cmd_evaluate(ctx);
        } else if (cmd == "report") {
            pl::cmd_report(ctx);
        } else if (cmd == "run") {
            pl::cmd_run(ctx, args.method);
        }
    } catch (const podiff::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
