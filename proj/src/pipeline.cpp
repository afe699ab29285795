#include "podiff/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>

#include "podiff/advdiff.hpp"
#include "podiff/baselines.hpp"
#include "podiff/diffusion.hpp"
#include "podiff/error.hpp"
#include "podiff/io.hpp"
#include "podiff/pod.hpp"

namespace podiff::pipeline {

using nlohmann::json;

namespace {

constexpr const char* kTrainHr = "data/train_hr.fst";
constexpr const char* kTestHr = "data/test_hr.fst";
constexpr const char* kTestLr = "data/test_lr.fst";
constexpr const char* kSnapshots = "data/snapshots.csv";
constexpr const char* kBasis = "pod/basis.fst";
constexpr const char* kBasisMeta = "pod/basis.json";
constexpr const char* kSpectrum = "pod/spectrum.csv";
constexpr const char* kMetrics = "metrics/metrics.csv";
constexpr const char* kReliability = "metrics/reliability.csv";
constexpr const char* kSweep = "metrics/ensemble_size.csv";

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

void log(const std::string& stage, const std::string& msg) { std::clog << "[" << stage << "] " << msg << std::endl; }

std::string fmt(double v) { return io::fmt_double(v); }

std::string level_name(double level) { return io::fmt_double(level); }

bool is_ensemble_method(const std::string& m) { return m == "podiff" || m == "randorth"; }

void check_method(const std::string& m, bool ensemble) {
    if (ensemble && !is_ensemble_method(m)) throw ConfigError("method must be podiff or randorth, got '" + m + "'");
    if (!ensemble && m != "podproj" && m != "rbf") throw ConfigError("method must be podproj or rbf, got '" + m + "'");
}

Field2D matrix_field(const Mat& m) {
    return Field2D(static_cast<std::size_t>(m.cols()), static_cast<std::size_t>(m.rows()),
                   std::vector<double>(m.data(), m.data() + m.size()));
}

Mat field_matrix(const Field2D& f) {
    Mat m(static_cast<Eigen::Index>(f.ny()), static_cast<Eigen::Index>(f.nx()));
    std::copy(f.values().begin(), f.values().end(), m.data());
    return m;
}

std::vector<Field2D> basis_to_fields(const PodBasis& b) {
    std::vector<Field2D> out{b.mean};
    for (std::size_t k = 0; k < b.rank(); ++k) out.push_back(b.mode_field(k));
    return out;
}

PodBasis basis_from_fields(const std::vector<Field2D>& fields, std::size_t k) {
    if (fields.size() < 2) throw CorruptArtifact("basis file holds no modes");
    if (k + 1 > fields.size()) {
        throw ConfigError("K = " + std::to_string(k) + " exceeds the " + std::to_string(fields.size() - 1) +
                          " modes stored by fit-pod");
    }
    PodBasis b;
    b.mean = fields[0];
    b.modes.resize(static_cast<Eigen::Index>(b.mean.size()), static_cast<Eigen::Index>(k));
    for (std::size_t j = 0; j < k; ++j) {
        const Field2D& f = fields[j + 1];
        if (!f.same_grid(b.mean)) throw CorruptArtifact("basis modes on different grids");
        for (std::size_t i = 0; i < f.size(); ++i) b.modes(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = f[i];
    }
    return b;
}

std::string basis_path(const std::string& method, std::size_t k) {
    return method == "randorth" ? "pod/randorth_k" + std::to_string(k) + ".fst" : kBasis;
}

std::string checkpoint_path(const std::string& tag) { return "model/" + tag + ".ckpt"; }

std::string latents_path(const std::string& tag, std::size_t c) {
    return "samples/" + tag + "/case_" + std::to_string(c) + ".fld";
}

/// Basis of rank k for an ensemble method, loaded from the files written by
/// fit-pod or train.
PodBasis load_method_basis(Context& ctx, const std::string& method, std::size_t k) {
    const std::string rel = basis_path(method, k);
    ctx.require(rel);
    PodBasis b = basis_from_fields(io::read_stack(ctx.out() / rel), k);
    if (method == "podiff") {
        ctx.require(kBasisMeta);
        const json meta = json::parse(io::read_file(ctx.out() / kBasisMeta));
        const auto ev = meta.at("eigenvalues").get<std::vector<double>>();
        b.eigenvalues = Eigen::Map<const Vec>(ev.data(), static_cast<Eigen::Index>(ev.size()));
        b.total_variance = meta.at("total_variance").get<double>();
    }
    return b;
}

std::string basis_ref(Context& ctx, const std::string& method, std::size_t k) {
    const std::string rel = basis_path(method, k);
    return rel + "@" + ctx.manifest()["artifacts"].at(rel).get<std::string>() + "#k" + std::to_string(k);
}

std::vector<Field2D> upsample_all(const std::vector<Field2D>& lr, std::size_t nx, std::size_t ny) {
    std::vector<Field2D> out;
    out.reserve(lr.size());
    for (const Field2D& f : lr) out.push_back(bicubic_upsample(f, nx, ny));
    return out;
}

std::vector<std::size_t> k_values_for(Context& ctx) {
    if (ctx.k_override()) return {*ctx.k_override()};
    return resolved_k_values(ctx);
}

void register_method(Context& ctx, const std::string& tag, json entry) {
    ctx.manifest()["methods"][tag] = std::move(entry);
}

struct Pooled {
    double sq = 0.0;
    double ab = 0.0;
    std::size_t n = 0;

    void add(const ErrorStats& s) {
        sq += s.rmse * s.rmse * static_cast<double>(s.count);
        ab += s.mae * static_cast<double>(s.count);
        n += s.count;
    }
    double rmse() const { return n ? std::sqrt(sq / static_cast<double>(n)) : std::numeric_limits<double>::quiet_NaN(); }
    double mae() const { return n ? ab / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN(); }
};

}  // namespace

void apply_overrides(ExperimentConfig& cfg, const Overrides& o) {
    if (o.seed) cfg.data.seed = *o.seed;
    if (o.out) cfg.output = *o.out;
    if (o.k) {
        cfg.pod.k_values = {*o.k};
        cfg.pod.eta.reset();
    }
    if (o.samples) cfg.diffusion.members = *o.samples;
    if (o.steps) cfg.diffusion.sampler_steps = *o.steps;
    cfg.validate();
}

Context::Context(ExperimentConfig cfg, std::optional<std::vector<std::size_t>> cases, std::optional<std::size_t> k)
    : cfg_(std::move(cfg)), cases_(std::move(cases)), k_(k), root_(cfg_.data.seed, "podiff") {
    cfg_.validate();
    const fs::path path = cfg_.output / "manifest.json";
    if (fs::exists(path)) {
        try {
            manifest_ = json::parse(io::read_file(path));
        } catch (const json::exception& e) {
            throw CorruptArtifact("manifest is not valid JSON: " + std::string(e.what()));
        }
        if (manifest_.contains("master_seed") && manifest_["master_seed"] != cfg_.data.seed) {
            log("manifest", "master seed changed; previous artifacts are discarded from the manifest");
            manifest_ = json::object();
        }
    }
    manifest_["tool"] = "podiff";
    manifest_["version"] = kToolVersion;
    manifest_["master_seed"] = cfg_.data.seed;
    manifest_["config"] = config_to_json(cfg_);
    if (!manifest_.contains("artifacts")) manifest_["artifacts"] = json::object();
}

RngStream Context::stream(const std::string& label) {
    RngStream s = root_.child(label);
    manifest_["streams"][label] = s.key();
    return s;
}

void Context::begin_stage(const std::string& name) {
    stage_ = name;
    stage_start_ = now_seconds();
    manifest_["stages"][name] = {{"inputs", json::object()}, {"outputs", json::object()}, {"telemetry", json::object()}};
    log(name, "start");
}

void Context::require(const std::string& rel) {
    const fs::path p = out() / rel;
    if (!fs::exists(p)) throw MissingPrerequisite("missing prerequisite " + p.string() + " (run the producing stage first)");
    const auto& artifacts = manifest_["artifacts"];
    if (!artifacts.contains(rel)) {
        throw MissingPrerequisite(p.string() + " is not recorded in the run manifest (run the producing stage first)");
    }
    const std::string h = io::sha256_file(p);
    if (artifacts[rel].get<std::string>() != h) {
        throw CorruptArtifact(p.string() + " does not match the hash recorded in the manifest");
    }
    if (!stage_.empty()) manifest_["stages"][stage_]["inputs"][rel] = h;
}

void Context::record_output(const std::string& rel) {
    const std::string h = io::sha256_file(out() / rel);
    manifest_["artifacts"][rel] = h;
    if (!stage_.empty()) manifest_["stages"][stage_]["outputs"][rel] = h;
}

json& Context::telemetry() { return manifest_["stages"][stage_]["telemetry"]; }

void Context::end_stage() {
    const double wall = now_seconds() - stage_start_;
    manifest_["stages"][stage_]["wall_seconds"] = wall;
    save_manifest();
    log(stage_, "done in " + io::fmt_double(std::round(wall * 100.0) / 100.0) + " s");
    stage_.clear();
}

void Context::save_manifest() const { io::write_file_atomic(out() / "manifest.json", manifest_.dump(2) + "\n"); }

std::string method_tag(const std::string& method, std::size_t k) {
    return method == "rbf" ? "rbf" : method + "_k" + std::to_string(k);
}

std::vector<std::size_t> resolved_k_values(const Context& ctx) {
    const fs::path meta_path = ctx.out() / kBasisMeta;
    if (!fs::exists(meta_path)) return ctx.config().pod.k_values;
    return json::parse(io::read_file(meta_path)).at("k_values").get<std::vector<std::size_t>>();
}

std::vector<std::size_t> selected_cases(Context& ctx) {
    ctx.require(kTestLr);
    const std::size_t n_test = io::read_stack(ctx.out() / kTestLr).size();
    std::vector<std::size_t> cases;
    if (ctx.case_override()) {
        cases = *ctx.case_override();
        for (std::size_t c : cases) {
            if (c >= n_test) throw ConfigError("case " + std::to_string(c) + " out of range (" + std::to_string(n_test) + " test snapshots)");
        }
        std::sort(cases.begin(), cases.end());
        cases.erase(std::unique(cases.begin(), cases.end()), cases.end());
    } else {
        const std::size_t n = ctx.config().metrics.cases == 0 ? n_test : std::min(ctx.config().metrics.cases, n_test);
        std::vector<std::size_t> order(n_test);
        std::iota(order.begin(), order.end(), std::size_t{0});
        RngStream s = ctx.stream("cases");
        for (std::size_t i = n_test; i > 1; --i) std::swap(order[i - 1], order[s.index(i)]);
        cases.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n));
        std::sort(cases.begin(), cases.end());
    }
    if (cases.empty()) throw ConfigError("no test cases selected");
    return cases;
}

void cmd_gen_data(Context& ctx) {
    ctx.begin_stage("gen-data");
    const DatasetConfig& dc = ctx.config().data.dataset;
    const Dataset ds = generate_dataset(ctx.stream("data"), dc);

    std::vector<Field2D> train_hr, test_hr, test_lr;
    io::CsvWriter meta({"split", "index", "trajectory", "step", "vx", "vy", "kappa"});
    auto emit = [&](const std::vector<std::size_t>& ids, const char* split, std::vector<Field2D>& hr_out, bool lr) {
        for (std::size_t id : ids) {
            const Trajectory& t = ds.trajectories[id];
            for (std::size_t s = 0; s < t.snapshots.size(); ++s) {
                meta.row({split, std::to_string(hr_out.size()), std::to_string(id), std::to_string(t.steps[s]),
                          fmt(t.params.vx), fmt(t.params.vy), fmt(t.params.kappa)});
                hr_out.push_back(t.snapshots[s]);
                if (lr) test_lr.push_back(block_average(t.snapshots[s], dc.factor));
            }
        }
    };
    emit(ds.train_ids, "train", train_hr, false);
    emit(ds.test_ids, "test", test_hr, true);

    io::write_stack(ctx.out() / kTrainHr, train_hr);
    io::write_stack(ctx.out() / kTestHr, test_hr);
    io::write_stack(ctx.out() / kTestLr, test_lr);
    meta.save(ctx.out() / kSnapshots);
    for (const char* rel : {kTrainHr, kTestHr, kTestLr, kSnapshots}) ctx.record_output(rel);
    ctx.telemetry() = {{"train_snapshots", train_hr.size()},
                       {"test_snapshots", test_hr.size()},
                       {"trajectories", dc.n_traj}};
    ctx.end_stage();
}

void cmd_fit_pod(Context& ctx) {
    ctx.begin_stage("fit-pod");
    ctx.require(kTrainHr);
    const std::vector<Field2D> train = io::read_stack(ctx.out() / kTrainHr);
    const PodSection& ps = ctx.config().pod;
    const std::size_t max_modes = ps.eta ? train.size() : *std::max_element(ps.k_values.begin(), ps.k_values.end());
    PodBasis basis = compute_pod(train, max_modes);

    std::vector<std::size_t> ks = ps.k_values;
    if (ps.eta) {
        ks = {select_k(basis.eigenvalues, *ps.eta)};
        basis = basis.truncated(ks.front());
    }
    const std::size_t k_max = *std::max_element(ks.begin(), ks.end());
    if (k_max > basis.rank()) {
        throw ConfigError("requested K = " + std::to_string(k_max) + " but the training snapshots support only " +
                          std::to_string(basis.rank()) + " modes");
    }

    io::write_stack(ctx.out() / kBasis, basis_to_fields(basis));
    const std::vector<double> cum = cumulative_variance(basis.eigenvalues, basis.total_variance);
    io::CsvWriter spec({"mode", "eigenvalue", "fraction", "cumulative"});
    for (Eigen::Index i = 0; i < basis.eigenvalues.size(); ++i) {
        spec.row({std::to_string(i + 1), fmt(basis.eigenvalues[i]), fmt(basis.eigenvalues[i] / basis.total_variance),
                  fmt(cum[static_cast<std::size_t>(i)])});
    }
    spec.save(ctx.out() / kSpectrum);
    json meta = {{"k_values", ks},
                 {"stored_modes", basis.rank()},
                 {"snapshots", train.size()},
                 {"total_variance", basis.total_variance},
                 {"eigenvalues", std::vector<double>(basis.eigenvalues.data(),
                                                     basis.eigenvalues.data() + basis.eigenvalues.size())}};
    if (ps.eta) meta["eta"] = *ps.eta;
    json captured = json::object();
    for (std::size_t k : ks) captured[std::to_string(k)] = cum.at(k - 1);
    meta["captured_variance"] = captured;
    io::write_file_atomic(ctx.out() / kBasisMeta, meta.dump(2) + "\n");
    for (const char* rel : {kBasis, kSpectrum, kBasisMeta}) ctx.record_output(rel);
    ctx.telemetry() = {{"k_values", ks}, {"captured_variance", captured}};
    ctx.end_stage();
}

void cmd_train(Context& ctx, const std::string& method) {
    check_method(method, true);
    ctx.begin_stage("train-" + method);
    const ExperimentConfig& cfg = ctx.config();
    ctx.require(kTrainHr);
    const std::vector<Field2D> train_hr = io::read_stack(ctx.out() / kTrainHr);
    const std::size_t nx = train_hr.front().nx(), ny = train_hr.front().ny();
    std::vector<Field2D> train_lr;
    train_lr.reserve(train_hr.size());
    for (const Field2D& f : train_hr) train_lr.push_back(block_average(f, cfg.data.dataset.factor));
    const std::vector<Field2D> train_up = upsample_all(train_lr, nx, ny);
    train_lr.clear();

    // Hold out whole trajectories (consecutive groups of snapshots) for validation.
    const std::size_t per_traj = cfg.data.dataset.steps.size();
    const std::size_t groups = train_hr.size() / per_traj;
    std::vector<std::size_t> group_order(groups);
    std::iota(group_order.begin(), group_order.end(), std::size_t{0});
    {
        RngStream s = ctx.stream("validation-split");
        for (std::size_t i = groups; i > 1; --i) std::swap(group_order[i - 1], group_order[s.index(i)]);
    }
    std::size_t n_val = static_cast<std::size_t>(std::llround(cfg.diffusion.validation_fraction * static_cast<double>(groups)));
    n_val = std::min(n_val, groups - 1);
    std::vector<std::uint8_t> is_val(groups, 0);
    for (std::size_t i = 0; i < n_val; ++i) is_val[group_order[i]] = 1;
    std::vector<std::size_t> fit_rows, val_rows;
    for (std::size_t i = 0; i < train_hr.size(); ++i) (is_val[i / per_traj] ? val_rows : fit_rows).push_back(i);

    auto take = [](const Mat& m, const std::vector<std::size_t>& rows) {
        Mat out(static_cast<Eigen::Index>(rows.size()), m.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
        return out;
    };

    json tele = json::object();
    for (std::size_t k : k_values_for(ctx)) {
        const std::string tag = method_tag(method, k);
        PodBasis basis;
        if (method == "podiff") {
            basis = load_method_basis(ctx, method, k);
        } else {
            ctx.require(kBasis);
            const Field2D mean = io::read_stack(ctx.out() / kBasis).front();
            RngStream s = ctx.stream("randorth/k" + std::to_string(k));
            basis = random_orthonormal_basis(s, mean.size(), k, mean);
            const std::string rel = basis_path(method, k);
            io::write_stack(ctx.out() / rel, basis_to_fields(basis));
            ctx.record_output(rel);
        }
        const Mat a = project_many(basis, train_hr);
        const Mat c = project_many(basis, train_up);
        const Mat a_fit = take(a, fit_rows), c_fit = take(c, fit_rows);

        DiffusionModel model;
        model.schedule = make_schedule(cfg.diffusion.timesteps, cfg.diffusion.beta_start, cfg.diffusion.beta_end);
        model.target_standardizer = CoeffStandardizer::fit(a_fit);
        model.cond_standardizer =
            cfg.diffusion.separate_conditioning_stats ? CoeffStandardizer::fit(c_fit) : model.target_standardizer;
        RngStream init = ctx.stream("init/k" + std::to_string(k));
        model.denoiser = MlpParams::init(cfg.mlp_config(k), init);

        const Mat a_std = model.target_standardizer.standardize_rows(a_fit);
        const Mat c_std = model.cond_standardizer.standardize_rows(c_fit);
        const Mat va_std = model.target_standardizer.standardize_rows(take(a, val_rows));
        const Mat vc_std = model.cond_standardizer.standardize_rows(take(c, val_rows));

        RngStream ts = ctx.stream("train/k" + std::to_string(k));
        const double t0 = now_seconds();
        log("train-" + method, tag + ": " + std::to_string(a_fit.rows()) + " training / " +
                                   std::to_string(va_std.rows()) + " validation samples, " +
                                   std::to_string(model.denoiser.size()) + " parameters");
        const TrainResult tr = train(model, a_std, c_std, va_std, vc_std, cfg.train_config(), ts);
        const double wall = now_seconds() - t0;

        io::Checkpoint ck;
        ck.params = model.denoiser;
        ck.beta_start = cfg.diffusion.beta_start;
        ck.beta_end = cfg.diffusion.beta_end;
        ck.target_standardizer = model.target_standardizer;
        ck.cond_standardizer = model.cond_standardizer;
        ck.basis_ref = basis_ref(ctx, method, k);
        io::write_checkpoint(ctx.out() / checkpoint_path(tag), ck);
        ctx.record_output(checkpoint_path(tag));

        io::CsvWriter loss({"epoch", "train_loss", "val_loss"});
        for (const EpochRecord& r : tr.history) loss.row({std::to_string(r.epoch), fmt(r.train_loss), fmt(r.val_loss)});
        const std::string loss_rel = "model/" + tag + "_loss.csv";
        loss.save(ctx.out() / loss_rel);
        ctx.record_output(loss_rel);

        tele[tag] = {{"best_epoch", tr.best_epoch},
                     {"best_val_loss", tr.best_val_loss},
                     {"final_train_loss", tr.history.back().train_loss},
                     {"parameters", model.denoiser.size()},
                     {"wall_seconds", wall}};
        log("train-" + method, tag + ": best validation loss " + fmt(tr.best_val_loss) + " at epoch " +
                                   std::to_string(tr.best_epoch));
    }
    ctx.telemetry() = tele;
    ctx.end_stage();
}

void cmd_sample(Context& ctx, const std::string& method) {
    check_method(method, true);
    ctx.begin_stage("sample-" + method);
    const ExperimentConfig& cfg = ctx.config();
    const std::vector<std::size_t> cases = selected_cases(ctx);
    const std::vector<Field2D> test_lr = io::read_stack(ctx.out() / kTestLr);
    ctx.require(kTestHr);
    const std::size_t nx = cfg.data.dataset.nx, ny = cfg.data.dataset.ny;

    std::size_t total = cfg.diffusion.members;
    for (std::size_t m : cfg.metrics.sweep_sizes) total = std::max(total, m);

    json tele = json::object();
    for (std::size_t k : k_values_for(ctx)) {
        const std::string tag = method_tag(method, k);
        ctx.require(checkpoint_path(tag));
        const io::Checkpoint ck = io::read_checkpoint(ctx.out() / checkpoint_path(tag));
        const PodBasis basis = load_method_basis(ctx, method, k);
        if (ck.basis_ref != basis_ref(ctx, method, k)) {
            throw CorruptArtifact(checkpoint_path(tag) + " was trained against a different basis (" + ck.basis_ref + ")");
        }
        const DiffusionModel model = io::to_model(ck);

        std::vector<Field2D> means, stds;
        json per_case = json::array();
        double wall = 0.0;
        for (std::size_t c : cases) {
            const Field2D x_up = bicubic_upsample(test_lr[c], nx, ny);
            const RngStream s = ctx.stream("sample/case/" + std::to_string(c));
            Ensemble ens = generate_ensemble(model, basis, x_up, total, cfg.diffusion.sampler_steps, s,
                                             cfg.diffusion.posterior);
            wall += ens.wall_seconds;
            const std::string rel = latents_path(tag, c);
            io::write_field(ctx.out() / rel, matrix_field(ens.latents));
            ctx.record_output(rel);
            const std::span<const Field2D> head(ens.members.data(), cfg.diffusion.members);
            means.push_back(ensemble_mean(head));
            Field2D sd = head.size() >= 2 ? ensemble_variance(head) : Field2D(nx, ny);
            for (double& v : sd.values()) v = std::sqrt(v);
            stds.push_back(std::move(sd));
            per_case.push_back({{"case", c}, {"wall_seconds", ens.wall_seconds}, {"members", total},
                                {"steps", ens.sampler_steps}});
        }
        const std::string mean_rel = "samples/" + tag + "/mean.fst";
        const std::string std_rel = "samples/" + tag + "/std.fst";
        io::write_stack(ctx.out() / mean_rel, means);
        io::write_stack(ctx.out() / std_rel, stds);
        ctx.record_output(mean_rel);
        ctx.record_output(std_rel);
        register_method(ctx, tag,
                        {{"kind", "ensemble"}, {"method", method}, {"k", k}, {"cases", cases}, {"generated", total},
                         {"members", cfg.diffusion.members}, {"checkpoint", checkpoint_path(tag)}});
        tele[tag] = {{"wall_seconds", wall}, {"per_case", per_case}};
        log("sample-" + method, tag + ": " + std::to_string(cases.size()) + " cases x " + std::to_string(total) +
                                    " members in " + fmt(std::round(wall * 10.0) / 10.0) + " s");
    }
    ctx.telemetry() = tele;
    ctx.end_stage();
}

void cmd_baseline(Context& ctx, const std::string& method) {
    check_method(method, false);
    ctx.begin_stage("baseline-" + method);
    const ExperimentConfig& cfg = ctx.config();
    const std::vector<std::size_t> cases = selected_cases(ctx);
    const std::vector<Field2D> test_lr = io::read_stack(ctx.out() / kTestLr);
    ctx.require(kTestHr);
    const std::size_t nx = cfg.data.dataset.nx, ny = cfg.data.dataset.ny;

    std::vector<std::size_t> ks = method == "rbf" ? std::vector<std::size_t>{0} : k_values_for(ctx);
    for (std::size_t k : ks) {
        const std::string tag = method_tag(method, k);
        std::vector<Field2D> preds;
        if (method == "podproj") {
            const PodBasis basis = load_method_basis(ctx, "podiff", k);
            for (std::size_t c : cases) preds.push_back(pod_projection(basis, bicubic_upsample(test_lr[c], nx, ny)));
        } else {
            for (std::size_t c : cases) preds.push_back(rbf_eval(rbf_fit(test_lr[c], cfg.baselines.rbf), nx, ny));
        }
        const std::string rel = "predictions/" + tag + ".fst";
        io::write_stack(ctx.out() / rel, preds);
        ctx.record_output(rel);
        json entry = {{"kind", "deterministic"}, {"method", method}, {"cases", cases}, {"predictions", rel}};
        if (method == "podproj") entry["k"] = k;
        register_method(ctx, tag, entry);
    }
    ctx.end_stage();
}

EvalSummary cmd_evaluate(Context& ctx) {
    ctx.begin_stage("evaluate");
    const ExperimentConfig& cfg = ctx.config();
    const std::vector<double>& levels = cfg.metrics.levels;
    ctx.require(kTestHr);
    ctx.require(kTrainHr);
    const std::vector<Field2D> test_hr = io::read_stack(ctx.out() / kTestHr);

    double threshold = 0.0;
    {
        std::vector<double> ref;
        for (const Field2D& f : io::read_stack(ctx.out() / kTrainHr)) {
            for (std::size_t i = 0; i < f.size(); ++i) {
                if (f.valid(i)) ref.push_back(f[i]);
            }
        }
        threshold = extreme_threshold(ref, cfg.metrics.extreme_quantile);
    }

    if (!ctx.manifest().contains("methods") || ctx.manifest()["methods"].empty()) {
        throw MissingPrerequisite("no sampled or baseline predictions recorded; run sample or baseline first");
    }

    EvalSummary summary;
    io::CsvWriter metrics({"method", "case", "metric", "value"});
    io::CsvWriter reliability({"method", "level", "empirical", "case"});
    io::CsvWriter sweep({"method", "members", "level", "coverage", "pooled"});

    for (const auto& [tag, entry] : ctx.manifest()["methods"].items()) {
        const auto cases = entry.at("cases").get<std::vector<std::size_t>>();
        if (summary.cases.empty()) summary.cases = cases;
        std::vector<Field2D> truths;
        for (std::size_t c : cases) {
            if (c >= test_hr.size()) throw CorruptArtifact("case index out of range for " + tag);
            truths.push_back(test_hr[c]);
        }
        std::vector<Mask> extreme;
        for (const Field2D& t : truths) extreme.push_back(mask_above(t, threshold));

        MethodResult res;
        res.report.method = tag;
        res.report.levels = levels;
        res.linear_uq_max_abs_diff = std::numeric_limits<double>::quiet_NaN();
        Pooled all, ext;
        double crps_sum = 0.0;
        std::size_t crps_n = 0;
        auto add_case = [&](std::size_t ci, const Field2D& pred, double crps) {
            const ErrorStats e = rmse_mae(pred, truths[ci]);
            all.add(e);
            const std::string cs = std::to_string(cases[ci]);
            metrics.row({tag, cs, "rmse", fmt(e.rmse)});
            metrics.row({tag, cs, "mae", fmt(e.mae)});
            if (std::any_of(extreme[ci].begin(), extreme[ci].end(), [](std::uint8_t v) { return v != 0; })) {
                const ErrorStats x = rmse_mae(pred, truths[ci], extreme[ci]);
                ext.add(x);
                metrics.row({tag, cs, "extreme_rmse", fmt(x.rmse)});
                metrics.row({tag, cs, "extreme_mae", fmt(x.mae)});
            }
            metrics.row({tag, cs, "crps", fmt(crps)});
            crps_sum += crps * static_cast<double>(e.count);
            crps_n += e.count;
        };

        if (entry.at("kind") == "ensemble") {
            const std::string method = entry.at("method");
            const std::size_t k = entry.at("k");
            const std::size_t m = entry.at("members");
            const std::size_t generated = entry.at("generated");
            ctx.require(entry.at("checkpoint").get<std::string>());
            const io::Checkpoint ck = io::read_checkpoint(ctx.out() / entry.at("checkpoint").get<std::string>());
            const PodBasis basis = load_method_basis(ctx, method, k);
            if (ck.basis_ref != basis_ref(ctx, method, k)) throw CorruptArtifact("checkpoint/basis mismatch for " + tag);
            res.members = m;
            res.linear_uq_max_abs_diff = 0.0;

            std::vector<std::vector<Field2D>> ensembles;
            for (std::size_t ci = 0; ci < cases.size(); ++ci) {
                const std::string rel = latents_path(tag, cases[ci]);
                ctx.require(rel);
                const Mat lat = field_matrix(io::read_field(ctx.out() / rel));
                if (static_cast<std::size_t>(lat.rows()) != generated || static_cast<std::size_t>(lat.cols()) != k) {
                    throw CorruptArtifact(rel + " has unexpected shape");
                }
                std::vector<Field2D> members;
                members.reserve(generated);
                for (Eigen::Index r = 0; r < lat.rows(); ++r) {
                    members.push_back(reconstruct(basis, CoeffVec{lat.row(r).transpose(), CoeffUnits::kPhysical}));
                }
                const std::span<const Field2D> head(members.data(), m);
                add_case(ci, ensemble_mean(head), crps_field(head, truths[ci], std::nullopt, cfg.metrics.fair_crps));
                if (m >= 2) {
                    const Field2D var = ensemble_variance(head);
                    const Mat cov = sample_covariance(ck.target_standardizer.standardize_rows(lat.topRows(static_cast<Eigen::Index>(m))));
                    const Field2D prop = propagate_covariance(basis, ck.target_standardizer, cov);
                    for (std::size_t i = 0; i < var.size(); ++i) {
                        res.linear_uq_max_abs_diff = std::max(res.linear_uq_max_abs_diff, std::abs(var[i] - prop[i]));
                    }
                }
                ensembles.push_back(std::move(members));
            }

            if (m >= 2) {
                const ReliabilityCurve curve = reliability_curve(ensembles, truths, levels, {}, m);
                res.report.coverage = curve.mean;
                res.pooled_coverage = curve.pooled;
                res.report.mace = mace(curve);
                for (std::size_t l = 0; l < levels.size(); ++l) {
                    for (std::size_t ci = 0; ci < cases.size(); ++ci) {
                        metrics.row({tag, std::to_string(cases[ci]), "coverage_" + level_name(levels[l]), fmt(curve.per_case[ci][l])});
                        reliability.row({tag, level_name(levels[l]), fmt(curve.per_case[ci][l]), std::to_string(cases[ci])});
                    }
                    reliability.row({tag, level_name(levels[l]), fmt(curve.mean[l]), "mean"});
                    reliability.row({tag, level_name(levels[l]), fmt(curve.pooled[l]), "pooled"});
                }
                std::vector<std::size_t> sizes;
                for (std::size_t s : cfg.metrics.sweep_sizes) {
                    if (s <= generated) sizes.push_back(s);
                }
                res.sweep = ensemble_size_sweep(ensembles, truths, sizes, levels);
                for (const SweepRow& r : res.sweep) {
                    sweep.row({tag, std::to_string(r.members), level_name(r.level), fmt(r.coverage), fmt(r.pooled)});
                }
                if (cases.size() >= 2) {
                    for (double level : levels) {
                        const std::string rel = "metrics/calibration_" + tag + "_" + level_name(level) + ".fld";
                        io::write_field(ctx.out() / rel, spatial_calibration_map(ensembles, truths, level, {}, m));
                        ctx.record_output(rel);
                    }
                }
            }
        } else {
            res.members = 1;
            const std::string rel = entry.at("predictions");
            ctx.require(rel);
            const std::vector<Field2D> preds = io::read_stack(ctx.out() / rel);
            if (preds.size() != cases.size()) throw CorruptArtifact(rel + " does not hold one prediction per case");
            for (std::size_t ci = 0; ci < cases.size(); ++ci) {
                add_case(ci, preds[ci], crps_field(std::span<const Field2D>(&preds[ci], 1), truths[ci]));
            }
        }

        res.report.rmse = all.rmse();
        res.report.mae = all.mae();
        res.report.extreme_rmse = ext.rmse();
        res.report.extreme_mae = ext.mae();
        res.report.crps = crps_sum / static_cast<double>(crps_n);
        metrics.row({tag, "all", "rmse", fmt(res.report.rmse)});
        metrics.row({tag, "all", "mae", fmt(res.report.mae)});
        metrics.row({tag, "all", "extreme_rmse", fmt(res.report.extreme_rmse)});
        metrics.row({tag, "all", "extreme_mae", fmt(res.report.extreme_mae)});
        metrics.row({tag, "all", "crps", fmt(res.report.crps)});
        metrics.row({tag, "all", "members", std::to_string(res.members)});
        if (!res.report.coverage.empty()) {
            for (std::size_t l = 0; l < levels.size(); ++l) {
                metrics.row({tag, "all", "coverage_" + level_name(levels[l]), fmt(res.report.coverage[l])});
                metrics.row({tag, "all", "pooled_coverage_" + level_name(levels[l]), fmt(res.pooled_coverage[l])});
            }
            metrics.row({tag, "all", "mace", fmt(res.report.mace)});
            metrics.row({tag, "all", "linear_uq_max_abs_diff", fmt(res.linear_uq_max_abs_diff)});
        }
        log("evaluate", tag + ": rmse " + fmt(res.report.rmse) + ", mae " + fmt(res.report.mae) +
                            (res.report.coverage.empty() ? "" : ", mace " + fmt(res.report.mace)));
        summary.methods[tag] = std::move(res);
    }

    metrics.save(ctx.out() / kMetrics);
    reliability.save(ctx.out() / kReliability);
    sweep.save(ctx.out() / kSweep);
    for (const char* rel : {kMetrics, kReliability, kSweep}) ctx.record_output(rel);
    ctx.telemetry() = {{"cases", summary.cases}, {"extreme_threshold", threshold}};
    ctx.end_stage();
    return summary;
}

void cmd_report(Context& ctx) {
    ctx.begin_stage("report");
    const ExperimentConfig& cfg = ctx.config();
    ctx.require(kMetrics);
    ctx.require(kSpectrum);
    ctx.require(kBasis);

    // metrics.csv -> one wide row per method
    std::map<std::string, std::map<std::string, std::string>> table;
    std::istringstream in(io::read_file(ctx.out() / kMetrics));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (cells.size() != 4) throw CorruptArtifact("metrics.csv: malformed row: " + line);
        if (cells[1] == "all") table[cells[0]][cells[2]] = cells[3];
    }
    std::vector<std::string> cols = {"rmse", "mae", "extreme_rmse", "extreme_mae", "crps", "mace"};
    for (double l : cfg.metrics.levels) cols.push_back("coverage_" + level_name(l));
    std::vector<std::string> header = {"method"};
    header.insert(header.end(), cols.begin(), cols.end());
    io::CsvWriter summary(header);
    for (const auto& [tag, values] : table) {
        std::vector<std::string> row = {tag};
        for (const std::string& c : cols) {
            auto it = values.find(c);
            row.push_back(it == values.end() ? "" : it->second);
        }
        summary.row(row);
    }
    summary.save(ctx.out() / "report/summary.csv");
    ctx.record_output("report/summary.csv");

    io::write_file_atomic(ctx.out() / "report/variance_spectrum.csv", io::read_file(ctx.out() / kSpectrum));
    ctx.record_output("report/variance_spectrum.csv");
    std::vector<Field2D> modes = io::read_stack(ctx.out() / kBasis);
    if (modes.size() > 17) modes.resize(17);
    io::write_stack(ctx.out() / "report/modes.fst", modes);
    ctx.record_output("report/modes.fst");
    ctx.end_stage();
}

EvalSummary cmd_run(Context& ctx, const std::optional<std::string>& method) {
    cmd_gen_data(ctx);
    cmd_fit_pod(ctx);
    auto want = [&](const char* m) { return !method || *method == m; };
    if (method && !is_ensemble_method(*method) && *method != "podproj" && *method != "rbf") {
        throw ConfigError("unknown method '" + *method + "'");
    }
    for (const char* m : {"podiff", "randorth"}) {
        if (want(m)) {
            cmd_train(ctx, m);
            cmd_sample(ctx, m);
        }
    }
    for (const char* m : {"podproj", "rbf"}) {
        if (want(m)) cmd_baseline(ctx, m);
    }
    EvalSummary s = cmd_evaluate(ctx);
    cmd_report(ctx);
    return s;
}

}  // namespace podiff::pipeline
