#include "podiff/diffusion.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "podiff/error.hpp"

namespace podiff {

NoiseSchedule make_schedule(std::size_t steps, double beta_start, double beta_end) {
    if (steps < 2) throw std::invalid_argument("make_schedule: need T >= 2");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
        throw std::invalid_argument("make_schedule: need 0 < beta_start <= beta_end < 1");
    }
    NoiseSchedule s;
    s.steps = steps;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    s.beta_.resize(steps);
    s.alpha_.resize(steps);
    s.alpha_bar_.resize(steps);
    double prod = 1.0;
    for (std::size_t i = 0; i < steps; ++i) {
        const double frac = static_cast<double>(i) / static_cast<double>(steps - 1);
        s.beta_[i] = beta_start + (beta_end - beta_start) * frac;
        s.alpha_[i] = 1.0 - s.beta_[i];
        prod *= s.alpha_[i];
        s.alpha_bar_[i] = prod;
    }
    return s;
}

Vec q_sample(const NoiseSchedule& schedule, const Vec& a0, std::size_t t, const Vec& eps) {
    if (t < 1 || t > schedule.steps) throw std::out_of_range("q_sample: t must lie in [1, T]");
    if (a0.size() != eps.size()) throw std::invalid_argument("q_sample: a0 and eps differ in length");
    const double ab = schedule.alpha_bar(t);
    return std::sqrt(ab) * a0 + std::sqrt(1.0 - ab) * eps;
}

Mat DiffusionModel::predict(const Mat& a_t, const Mat& c, std::size_t t) const {
    const std::vector<std::size_t> steps(static_cast<std::size_t>(a_t.rows()), t);
    return forward(denoiser, a_t, c, steps);
}

namespace {

struct NoisyBatch {
    Mat a_t;
    Mat eps;
    std::vector<std::size_t> t;
};

NoisyBatch make_noisy(const NoiseSchedule& schedule, const Mat& a0, std::span<const std::size_t> rows,
                      RngStream& stream) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    NoisyBatch b{Mat(n, a0.cols()), Mat(n, a0.cols()), std::vector<std::size_t>(rows.size())};
    for (Eigen::Index r = 0; r < n; ++r) {
        const std::size_t t = 1 + stream.index(schedule.steps);
        b.t[static_cast<std::size_t>(r)] = t;
        for (Eigen::Index j = 0; j < a0.cols(); ++j) b.eps(r, j) = stream.normal();
        const double ab = schedule.alpha_bar(t);
        b.a_t.row(r) = std::sqrt(ab) * a0.row(static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)])) +
                       std::sqrt(1.0 - ab) * b.eps.row(r);
    }
    return b;
}

Mat gather(const Mat& m, std::span<const std::size_t> rows) {
    Mat out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
    }
    return out;
}

void check_training_shapes(const DiffusionModel& model, const Mat& a0, const Mat& c, const char* what) {
    const auto k = static_cast<Eigen::Index>(model.latent_dim());
    if (a0.cols() != k || c.cols() != k || a0.rows() != c.rows()) {
        throw std::invalid_argument(std::string(what) + ": data shape does not match the denoiser");
    }
}

}  // namespace

double diffusion_loss(const DiffusionModel& model, const Mat& a0, const Mat& c, RngStream stream) {
    check_training_shapes(model, a0, c, "diffusion_loss");
    if (a0.rows() == 0) throw std::invalid_argument("diffusion_loss: empty data");
    constexpr std::size_t kChunk = 512;
    const auto n = static_cast<std::size_t>(a0.rows());
    double total = 0.0;
    std::vector<std::size_t> rows;
    for (std::size_t start = 0; start < n; start += kChunk) {
        rows.resize(std::min(kChunk, n - start));
        std::iota(rows.begin(), rows.end(), start);
        const NoisyBatch b = make_noisy(model.schedule, a0, rows, stream);
        const Mat pred = forward(model.denoiser, b.a_t, gather(c, rows), b.t);
        total += (pred - b.eps).squaredNorm();
    }
    return total / static_cast<double>(n * model.latent_dim());
}

TrainResult train(DiffusionModel& model, const Mat& train_a0, const Mat& train_c, const Mat& val_a0,
                  const Mat& val_c, const TrainConfig& cfg, RngStream& stream) {
    check_training_shapes(model, train_a0, train_c, "train");
    if (train_a0.rows() == 0) throw std::invalid_argument("train: empty training set");
    const bool has_val = val_a0.rows() > 0;
    if (has_val) check_training_shapes(model, val_a0, val_c, "train (validation)");
    if (cfg.batch_size == 0 || cfg.epochs == 0) throw std::invalid_argument("train: batch size and epochs must be >= 1");
    if (model.denoiser.config().timesteps != model.schedule.steps) {
        throw std::invalid_argument("train: denoiser and schedule disagree on T");
    }

    const auto n = static_cast<std::size_t>(train_a0.rows());
    const auto k = static_cast<double>(model.latent_dim());
    AdamWState opt(cfg.optimizer, model.denoiser.size());
    const RngStream val_stream = stream.child("validation");

    TrainResult result;
    result.timestep_counts.assign(model.schedule.steps, 0);
    result.best_val_loss = std::numeric_limits<double>::infinity();
    std::vector<double> best_params;
    std::vector<std::size_t> order(n);
    ForwardCache cache;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[stream.index(i)]);

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::span<const std::size_t> rows(order.data() + start, std::min(cfg.batch_size, n - start));
            const NoisyBatch b = make_noisy(model.schedule, train_a0, rows, stream);
            for (std::size_t t : b.t) ++result.timestep_counts[t - 1];
            const Mat pred = forward(model.denoiser, b.a_t, gather(train_c, rows), b.t, &cache);
            const Mat diff = pred - b.eps;
            const double count = static_cast<double>(rows.size()) * k;
            const double loss = diff.squaredNorm() / count;
            if (!std::isfinite(loss)) {
                throw NumericalFailure("train: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                       std::to_string(opt.step + 1));
            }
            epoch_loss += loss * static_cast<double>(rows.size());
            const std::vector<double> grad = backward(model.denoiser, cache, (2.0 / count) * diff);
            adamw_step(opt, model.denoiser, grad);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = epoch_loss / static_cast<double>(n);
        rec.val_loss = has_val ? diffusion_loss(model, val_a0, val_c, val_stream) : rec.train_loss;
        if (!std::isfinite(rec.val_loss)) {
            throw NumericalFailure("train: non-finite validation loss at epoch " + std::to_string(epoch));
        }
        result.history.push_back(rec);
        if (rec.val_loss < result.best_val_loss) {
            result.best_val_loss = rec.val_loss;
            result.best_epoch = epoch;
            best_params.assign(model.denoiser.data().begin(), model.denoiser.data().end());
        }
    }
    std::copy(best_params.begin(), best_params.end(), model.denoiser.data().begin());
    model.denoiser.mark_modified();
    return result;
}

std::vector<std::size_t> sampling_timesteps(std::size_t steps, std::size_t sampler_steps) {
    if (sampler_steps < 1 || sampler_steps > steps) {
        throw std::out_of_range("sampling_timesteps: S must lie in [1, T]");
    }
    std::vector<std::size_t> taus(sampler_steps);
    for (std::size_t i = 1; i <= sampler_steps; ++i) taus[i - 1] = i * steps / sampler_steps;
    return taus;
}

Mat sample_batch(const NoisePredictor& model, const NoiseSchedule& schedule, const Mat& c_std,
                 std::size_t sampler_steps, std::span<RngStream> streams, PosteriorVariance variance) {
    const auto k = static_cast<Eigen::Index>(model.latent_dim());
    const auto m = static_cast<Eigen::Index>(streams.size());
    if (c_std.rows() != m || c_std.cols() != k) throw std::invalid_argument("sample_batch: conditioning shape mismatch");
    const std::vector<std::size_t> taus = sampling_timesteps(schedule.steps, sampler_steps);

    Mat a(m, k);
    for (Eigen::Index r = 0; r < m; ++r) {
        for (Eigen::Index j = 0; j < k; ++j) a(r, j) = streams[static_cast<std::size_t>(r)].normal();
    }
    for (std::size_t i = taus.size(); i-- > 0;) {
        const std::size_t t = taus[i];
        const std::size_t t_prev = i == 0 ? 0 : taus[i - 1];
        const double ab = schedule.alpha_bar(t);
        const double ab_prev = schedule.alpha_bar(t_prev);
        const double beta = 1.0 - ab / ab_prev;

        const Mat eps = model.predict(a, c_std, t);
        const Mat x0 = (a - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab);
        a = (std::sqrt(ab_prev) * beta / (1.0 - ab)) * x0 + (std::sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab)) * a;
        if (t_prev > 0) {
            const double var = variance == PosteriorVariance::kUpper ? beta : (1.0 - ab_prev) / (1.0 - ab) * beta;
            const double sd = std::sqrt(var);
            for (Eigen::Index r = 0; r < m; ++r) {
                for (Eigen::Index j = 0; j < k; ++j) a(r, j) += sd * streams[static_cast<std::size_t>(r)].normal();
            }
        }
        if (!a.allFinite()) {
            throw NumericalFailure("sampler: non-finite coefficients at t = " + std::to_string(t));
        }
    }
    return a;
}

CoeffVec p_sample_loop(const NoisePredictor& model, const NoiseSchedule& schedule, const CoeffVec& c_std,
                       std::size_t sampler_steps, RngStream& stream, PosteriorVariance variance) {
    if (c_std.units != CoeffUnits::kStandardized) {
        throw std::invalid_argument("p_sample_loop: conditioning must be standardized");
    }
    const Mat c = c_std.values.transpose();
    const Mat out = sample_batch(model, schedule, c, sampler_steps, std::span<RngStream>(&stream, 1), variance);
    return {out.row(0).transpose(), CoeffUnits::kStandardized};
}

Ensemble generate_ensemble(const DiffusionModel& model, const PodBasis& basis, const Field2D& x_up,
                           std::size_t members, std::size_t sampler_steps, const RngStream& stream,
                           PosteriorVariance variance) {
    if (members < 1) throw std::invalid_argument("generate_ensemble: M must be >= 1");
    if (basis.rank() != model.latent_dim()) {
        throw std::invalid_argument("generate_ensemble: basis rank does not match the denoiser");
    }
    if (!x_up.same_grid(basis.mean)) throw std::invalid_argument("generate_ensemble: grid mismatch");
    const auto start = std::chrono::steady_clock::now();

    Ensemble ens;
    ens.sampler_steps = sampler_steps;
    ens.conditioning = model.cond_standardizer.standardize(project(basis, x_up));
    std::vector<RngStream> streams;
    streams.reserve(members);
    for (std::size_t m = 0; m < members; ++m) streams.push_back(stream.child("member/" + std::to_string(m)));
    const Mat c = ens.conditioning.values.transpose().replicate(static_cast<Eigen::Index>(members), 1);
    const Mat z = sample_batch(model, model.schedule, c, sampler_steps, streams, variance);
    ens.latents = model.target_standardizer.destandardize_rows(z);

    const Eigen::Map<const Eigen::RowVectorXd> mean(basis.mean.values().data(),
                                                    static_cast<Eigen::Index>(basis.dim()));
    const Mat fields = (ens.latents * basis.modes.transpose()).rowwise() + mean;
    ens.members.reserve(members);
    for (Eigen::Index r = 0; r < fields.rows(); ++r) {
        ens.members.emplace_back(basis.mean.nx(), basis.mean.ny(),
                                 std::vector<double>(fields.row(r).data(), fields.row(r).data() + fields.cols()));
    }
    ens.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return ens;
}

Field2D ensemble_mean(std::span<const Field2D> members) {
    if (members.empty()) throw std::invalid_argument("ensemble_mean: empty ensemble");
    Field2D out(members.front().nx(), members.front().ny(), 0.0);
    for (const Field2D& f : members) {
        if (!f.same_grid(out)) throw std::invalid_argument("ensemble_mean: members on different grids");
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += f[i];
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= static_cast<double>(members.size());
    return out;
}

Field2D ensemble_variance(std::span<const Field2D> members) {
    if (members.size() < 2) throw std::invalid_argument("ensemble_variance: need at least 2 members");
    const Field2D mean = ensemble_mean(members);
    Field2D out(mean.nx(), mean.ny(), 0.0);
    for (const Field2D& f : members) {
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double d = f[i] - mean[i];
            out[i] += d * d;
        }
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= static_cast<double>(members.size() - 1);
    return out;
}

}  // namespace podiff
