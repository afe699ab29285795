#include "podiff/config.hpp"

#include <set>
#include <sstream>

#include <toml.hpp>

#include "podiff/error.hpp"
#include "podiff/io.hpp"

namespace podiff {

namespace {

// Reads typed keys from one table and remembers which keys were consumed so
// that leftovers can be reported as unknown.
class Section {
public:
    Section(const toml::table* table, std::string name) : table_(table), name_(std::move(name)) {}

    template <typename T>
    void get(const char* key, T& out) {
        used_.insert(key);
        if (!table_) return;
        const toml::node* node = table_->get(key);
        if (!node) return;
        if constexpr (std::is_same_v<T, bool>) {
            out = require<bool>(node, key);
        } else if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
            const auto v = require<std::int64_t>(node, key);
            if (v < 0) fail(key, "must be non-negative");
            out = static_cast<T>(v);
        } else if constexpr (std::is_same_v<T, double>) {
            if (auto i = node->value_exact<std::int64_t>()) {
                out = static_cast<double>(*i);
            } else {
                out = require<double>(node, key);
            }
        } else if constexpr (std::is_same_v<T, std::string>) {
            out = require<std::string>(node, key);
        } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
            out.clear();
            for (const toml::node& el : array(node, key)) {
                const auto v = require<std::int64_t>(&el, key);
                if (v < 0) fail(key, "entries must be non-negative");
                out.push_back(static_cast<std::size_t>(v));
            }
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
            out.clear();
            for (const toml::node& el : array(node, key)) {
                if (auto i = el.value_exact<std::int64_t>()) {
                    out.push_back(static_cast<double>(*i));
                } else {
                    out.push_back(require<double>(&el, key));
                }
            }
        } else {
            static_assert(sizeof(T) == 0, "unsupported config type");
        }
    }

    template <typename T>
    void get_optional(const char* key, std::optional<T>& out) {
        used_.insert(key);
        if (!table_ || !table_->get(key)) return;
        T v{};
        get(key, v);
        out = v;
    }

    void finish() const {
        if (!table_) return;
        for (const auto& [k, v] : *table_) {
            if (!used_.count(std::string(k.str()))) {
                throw ConfigError("unknown key '" + std::string(k.str()) + "' in [" + name_ + "]");
            }
        }
    }

private:
    template <typename T>
    T require(const toml::node* node, const char* key) const {
        auto v = node->value_exact<T>();
        if (!v) fail(key, "has the wrong type");
        return *v;
    }

    const toml::array& array(const toml::node* node, const char* key) const {
        const toml::array* arr = node->as_array();
        if (!arr) fail(key, "must be an array");
        return *arr;
    }

    [[noreturn]] void fail(const char* key, const char* what) const {
        throw ConfigError("[" + name_ + "] " + key + " " + what);
    }

    const toml::table* table_;
    std::string name_;
    std::set<std::string> used_;
};

const toml::table* subtable(const toml::table& root, const char* name) {
    const toml::node* n = root.get(name);
    if (!n) return nullptr;
    if (!n->is_table()) throw ConfigError(std::string("[") + name + "] must be a table");
    return n->as_table();
}

const char* posterior_name(PosteriorVariance p) { return p == PosteriorVariance::kUpper ? "upper" : "lower"; }
const char* kernel_name(RbfKernel k) { return k == RbfKernel::kGaussian ? "gaussian" : "thin_plate"; }

}  // namespace

ExperimentConfig parse_config(const std::string& toml_text, const std::string& source) {
    toml::table root;
    try {
        root = toml::parse(toml_text, source);
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << "cannot parse " << source << ": " << e.description() << " at line " << e.source().begin.line;
        throw ConfigError(msg.str());
    }

    ExperimentConfig cfg;
    static const std::set<std::string> kTop = {"output", "data", "pod", "diffusion", "baselines", "metrics"};
    for (const auto& [k, v] : root) {
        if (!kTop.count(std::string(k.str()))) throw ConfigError("unknown top-level key '" + std::string(k.str()) + "'");
    }
    if (const toml::node* out = root.get("output")) {
        auto s = out->value_exact<std::string>();
        if (!s) throw ConfigError("output must be a string");
        cfg.output = *s;
    }

    Section data(subtable(root, "data"), "data");
    DatasetConfig& d = cfg.data.dataset;
    data.get("seed", cfg.data.seed);
    data.get("n_traj", d.n_traj);
    std::optional<std::size_t> grid;
    data.get_optional("grid", grid);
    if (grid) d.nx = d.ny = *grid;
    data.get("nx", d.nx);
    data.get("ny", d.ny);
    data.get("factor", d.factor);
    data.get("dt", d.dt);
    data.get("cutoff", d.spectrum.cutoff);
    data.get("spectrum_width", d.spectrum.width);
    data.get("steps", d.steps);
    data.get("test_fraction", d.test_fraction);
    data.get("velocity_max", d.velocity_max);
    data.get("kappa_min", d.kappa_min);
    data.get("kappa_max", d.kappa_max);
    data.finish();

    Section pod(subtable(root, "pod"), "pod");
    pod.get("k", cfg.pod.k_values);
    pod.get_optional("eta", cfg.pod.eta);
    pod.finish();

    Section diff(subtable(root, "diffusion"), "diffusion");
    DiffusionSection& ds = cfg.diffusion;
    diff.get("timesteps", ds.timesteps);
    diff.get("beta_start", ds.beta_start);
    diff.get("beta_end", ds.beta_end);
    diff.get("hidden", ds.hidden);
    diff.get("blocks", ds.blocks);
    diff.get("embed_dim", ds.embed_dim);
    diff.get("lr", ds.lr);
    diff.get("weight_decay", ds.weight_decay);
    diff.get("batch_size", ds.batch_size);
    diff.get("epochs", ds.epochs);
    diff.get("sampler_steps", ds.sampler_steps);
    diff.get("members", ds.members);
    std::string posterior = posterior_name(ds.posterior);
    diff.get("posterior_variance", posterior);
    if (posterior == "lower") {
        ds.posterior = PosteriorVariance::kLower;
    } else if (posterior == "upper") {
        ds.posterior = PosteriorVariance::kUpper;
    } else {
        throw ConfigError("[diffusion] posterior_variance must be \"lower\" or \"upper\"");
    }
    diff.get("validation_fraction", ds.validation_fraction);
    diff.get("separate_conditioning_stats", ds.separate_conditioning_stats);
    diff.finish();

    Section base(subtable(root, "baselines"), "baselines");
    std::string kernel = kernel_name(cfg.baselines.rbf.kernel);
    base.get("kernel", kernel);
    if (kernel == "thin_plate") {
        cfg.baselines.rbf.kernel = RbfKernel::kThinPlate;
    } else if (kernel == "gaussian") {
        cfg.baselines.rbf.kernel = RbfKernel::kGaussian;
    } else {
        throw ConfigError("[baselines] kernel must be \"thin_plate\" or \"gaussian\"");
    }
    base.get("ridge", cfg.baselines.rbf.ridge);
    base.get("length_scale", cfg.baselines.rbf.length_scale);
    base.finish();

    Section met(subtable(root, "metrics"), "metrics");
    met.get("levels", cfg.metrics.levels);
    met.get("extreme_quantile", cfg.metrics.extreme_quantile);
    met.get("cases", cfg.metrics.cases);
    met.get("sweep_sizes", cfg.metrics.sweep_sizes);
    met.get("fair_crps", cfg.metrics.fair_crps);
    met.finish();

    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = io::read_file(path);
    } catch (const MissingPrerequisite&) {
        throw ConfigError("config file not found: " + path.string());
    }
    return parse_config(text, path.string());
}

void ExperimentConfig::validate() const {
    auto check = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError(msg);
    };
    const DatasetConfig& d = data.dataset;
    check(d.n_traj >= 2, "[data] n_traj must be >= 2");
    check(is_power_of_two(d.nx) && is_power_of_two(d.ny), "[data] grid dimensions must be powers of two");
    check(d.factor >= 1 && d.nx % d.factor == 0 && d.ny % d.factor == 0, "[data] factor must divide the grid");
    check(d.dt > 0.0, "[data] dt must be > 0");
    check(d.spectrum.cutoff > 0.0 && d.spectrum.cutoff < 0.5 * static_cast<double>(std::min(d.nx, d.ny)),
          "[data] cutoff must lie in (0, min(nx, ny) / 2)");
    check(d.spectrum.width > 0.0, "[data] spectrum_width must be > 0");
    check(!d.steps.empty(), "[data] steps must not be empty");
    check(d.test_fraction > 0.0 && d.test_fraction < 1.0, "[data] test_fraction must lie in (0, 1)");
    check(d.velocity_max >= 0.0, "[data] velocity_max must be >= 0");
    check(d.kappa_min > 0.0 && d.kappa_min <= d.kappa_max, "[data] need 0 < kappa_min <= kappa_max");

    check(!pod.k_values.empty() || pod.eta.has_value(), "[pod] give k or eta");
    for (std::size_t k : pod.k_values) check(k >= 1, "[pod] k entries must be >= 1");
    if (pod.eta) check(*pod.eta > 0.0 && *pod.eta < 1.0, "[pod] eta must lie in (0, 1)");

    const DiffusionSection& s = diffusion;
    check(s.timesteps >= 2, "[diffusion] timesteps must be >= 2");
    check(s.beta_start > 0.0 && s.beta_start <= s.beta_end && s.beta_end < 1.0,
          "[diffusion] need 0 < beta_start <= beta_end < 1");
    check(s.hidden >= 1 && s.embed_dim >= 2 && s.embed_dim % 2 == 0, "[diffusion] hidden >= 1 and even embed_dim >= 2");
    check(s.lr > 0.0 && s.weight_decay >= 0.0, "[diffusion] lr must be > 0 and weight_decay >= 0");
    check(s.batch_size >= 1 && s.epochs >= 1, "[diffusion] batch_size and epochs must be >= 1");
    check(s.sampler_steps >= 1 && s.sampler_steps <= s.timesteps, "[diffusion] sampler_steps must lie in [1, timesteps]");
    check(s.members >= 1, "[diffusion] members must be >= 1");
    check(s.validation_fraction >= 0.0 && s.validation_fraction < 1.0, "[diffusion] validation_fraction must lie in [0, 1)");

    check(baselines.rbf.ridge >= 0.0, "[baselines] ridge must be >= 0");
    check(baselines.rbf.length_scale > 0.0, "[baselines] length_scale must be > 0");

    check(!metrics.levels.empty(), "[metrics] levels must not be empty");
    for (std::size_t i = 0; i < metrics.levels.size(); ++i) {
        check(metrics.levels[i] > 0.0 && metrics.levels[i] < 1.0, "[metrics] levels must lie in (0, 1)");
        check(i == 0 || metrics.levels[i] > metrics.levels[i - 1], "[metrics] levels must be increasing");
    }
    check(metrics.extreme_quantile >= 0.0 && metrics.extreme_quantile <= 1.0,
          "[metrics] extreme_quantile must lie in [0, 1]");
    for (std::size_t m : metrics.sweep_sizes) check(m >= 2, "[metrics] sweep sizes must be >= 2");
}

MlpConfig ExperimentConfig::mlp_config(std::size_t k) const {
    MlpConfig c;
    c.latent_dim = k;
    c.hidden = diffusion.hidden;
    c.blocks = diffusion.blocks;
    c.embed_dim = diffusion.embed_dim;
    c.timesteps = diffusion.timesteps;
    return c;
}

TrainConfig ExperimentConfig::train_config() const {
    TrainConfig t;
    t.batch_size = diffusion.batch_size;
    t.epochs = diffusion.epochs;
    t.optimizer.lr = diffusion.lr;
    t.optimizer.weight_decay = diffusion.weight_decay;
    return t;
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    const DatasetConfig& d = cfg.data.dataset;
    const DiffusionSection& s = cfg.diffusion;
    nlohmann::json j;
    j["output"] = cfg.output.string();
    j["data"] = {{"seed", cfg.data.seed},
                 {"n_traj", d.n_traj},
                 {"nx", d.nx},
                 {"ny", d.ny},
                 {"factor", d.factor},
                 {"dt", d.dt},
                 {"cutoff", d.spectrum.cutoff},
                 {"spectrum_width", d.spectrum.width},
                 {"steps", d.steps},
                 {"test_fraction", d.test_fraction},
                 {"velocity_max", d.velocity_max},
                 {"kappa_min", d.kappa_min},
                 {"kappa_max", d.kappa_max}};
    j["pod"] = {{"k", cfg.pod.k_values}};
    if (cfg.pod.eta) j["pod"]["eta"] = *cfg.pod.eta;
    j["diffusion"] = {{"timesteps", s.timesteps},
                      {"beta_start", s.beta_start},
                      {"beta_end", s.beta_end},
                      {"hidden", s.hidden},
                      {"blocks", s.blocks},
                      {"embed_dim", s.embed_dim},
                      {"lr", s.lr},
                      {"weight_decay", s.weight_decay},
                      {"batch_size", s.batch_size},
                      {"epochs", s.epochs},
                      {"sampler_steps", s.sampler_steps},
                      {"members", s.members},
                      {"posterior_variance", posterior_name(s.posterior)},
                      {"validation_fraction", s.validation_fraction},
                      {"separate_conditioning_stats", s.separate_conditioning_stats}};
    j["baselines"] = {{"kernel", kernel_name(cfg.baselines.rbf.kernel)},
                      {"ridge", cfg.baselines.rbf.ridge},
                      {"length_scale", cfg.baselines.rbf.length_scale}};
    j["metrics"] = {{"levels", cfg.metrics.levels},
                    {"extreme_quantile", cfg.metrics.extreme_quantile},
                    {"cases", cfg.metrics.cases},
                    {"sweep_sizes", cfg.metrics.sweep_sizes},
                    {"fair_crps", cfg.metrics.fair_crps}};
    return j;
}

std::string config_to_toml(const ExperimentConfig& cfg) {
    const nlohmann::json j = config_to_json(cfg);
    toml::table root;
    root.insert("output", j["output"].get<std::string>());
    for (const char* section : {"data", "pod", "diffusion", "baselines", "metrics"}) {
        toml::table t;
        for (const auto& [key, value] : j[section].items()) {
            if (value.is_boolean()) {
                t.insert(key, value.get<bool>());
            } else if (value.is_number_integer()) {
                t.insert(key, value.get<std::int64_t>());
            } else if (value.is_number()) {
                t.insert(key, value.get<double>());
            } else if (value.is_string()) {
                t.insert(key, value.get<std::string>());
            } else if (value.is_array()) {
                toml::array arr;
                for (const auto& el : value) {
                    if (el.is_number_integer()) {
                        arr.push_back(el.get<std::int64_t>());
                    } else {
                        arr.push_back(el.get<double>());
                    }
                }
                t.insert(key, std::move(arr));
            }
        }
        root.insert(section, std::move(t));
    }
    std::ostringstream out;
    out << root << '\n';
    return out.str();
}

}  // namespace podiff
