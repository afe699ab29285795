#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "podiff/denoiser.hpp"
#include "podiff/field.hpp"
#include "podiff/pod.hpp"
#include "podiff/tensor.hpp"

namespace podiff {

/// Linear beta schedule. Vectors are indexed by t - 1 for t = 1..T; use the
/// accessors, which also define alpha_bar(0) = 1.
struct NoiseSchedule {
    std::size_t steps = 0;
    double beta_start = 0.0;
    double beta_end = 0.0;
    std::vector<double> beta_;
    std::vector<double> alpha_;
    std::vector<double> alpha_bar_;

    double beta(std::size_t t) const { return beta_.at(t - 1); }
    double alpha(std::size_t t) const { return alpha_.at(t - 1); }
    double alpha_bar(std::size_t t) const { return t == 0 ? 1.0 : alpha_bar_.at(t - 1); }
};

NoiseSchedule make_schedule(std::size_t steps, double beta_start, double beta_end);

/// a_t = sqrt(abar_t) a0 + sqrt(1 - abar_t) eps, for 1 <= t <= T.
Vec q_sample(const NoiseSchedule& schedule, const Vec& a0, std::size_t t, const Vec& eps);

/// Anything that predicts the injected noise for a batch at a shared step t.
class NoisePredictor {
public:
    virtual ~NoisePredictor() = default;
    virtual std::size_t latent_dim() const = 0;
    virtual Mat predict(const Mat& a_t, const Mat& c, std::size_t t) const = 0;
};

enum class PosteriorVariance { kLower, kUpper };

/// Conditional DDPM in standardized coefficient space.
struct DiffusionModel : NoisePredictor {
    NoiseSchedule schedule;
    MlpParams denoiser;
    CoeffStandardizer target_standardizer;
    CoeffStandardizer cond_standardizer;

    std::size_t latent_dim() const override { return denoiser.config().latent_dim; }
    Mat predict(const Mat& a_t, const Mat& c, std::size_t t) const override;
};

struct TrainConfig {
    std::size_t batch_size = 128;
    std::size_t epochs = 400;
    AdamWConfig optimizer;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;  // equals train_loss when there is no validation set
};

struct TrainResult {
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    double best_val_loss = 0.0;
    std::vector<std::size_t> timestep_counts;  // draws of t over the whole run, index t - 1
};

/// Minibatch AdamW on mean_{batch, coords} ||eps - eps_theta(a_t, c, t)||^2 with t
/// uniform on {1..T}. Rows of a0/c are standardized samples. The validation
/// loss uses a fixed set of (t, eps) draws so epochs are comparable; the
/// parameters with the lowest validation loss are written back into `model`.
/// Throws NumericalFailure if the loss becomes non-finite.
TrainResult train(DiffusionModel& model, const Mat& train_a0, const Mat& train_c, const Mat& val_a0,
                  const Mat& val_c, const TrainConfig& cfg, RngStream& stream);

/// Mean loss over fixed draws from `stream` (used for validation).
double diffusion_loss(const DiffusionModel& model, const Mat& a0, const Mat& c, RngStream stream);

/// Evenly strided timestep subsequence tau_1 < ... < tau_S = T (tau_i = floor(i T / S)).
std::vector<std::size_t> sampling_timesteps(std::size_t steps, std::size_t sampler_steps);

/// Ancestral sampling for a batch: row m uses only streams[m] for its initial
/// noise and per-step noise, so every row is independent of the others.
/// `c_std` holds one standardized conditioning row per member.
Mat sample_batch(const NoisePredictor& model, const NoiseSchedule& schedule, const Mat& c_std,
                 std::size_t sampler_steps, std::span<RngStream> streams,
                 PosteriorVariance variance = PosteriorVariance::kLower);

/// Single reverse trajectory a_T ~ N(0, I) -> a_0 over an evenly strided
/// subsequence; the final step adds no noise.
CoeffVec p_sample_loop(const NoisePredictor& model, const NoiseSchedule& schedule, const CoeffVec& c_std,
                       std::size_t sampler_steps, RngStream& stream,
                       PosteriorVariance variance = PosteriorVariance::kLower);

struct Ensemble {
    std::vector<Field2D> members;
    Mat latents;            // M x K, physical units
    CoeffVec conditioning;  // standardized
    std::size_t sampler_steps = 0;
    double wall_seconds = 0.0;
};

/// M reconstructions for one upsampled observation. Member m samples with
/// stream.child("member/<m>").
Ensemble generate_ensemble(const DiffusionModel& model, const PodBasis& basis, const Field2D& x_up,
                           std::size_t members, std::size_t sampler_steps, const RngStream& stream,
                           PosteriorVariance variance = PosteriorVariance::kLower);

/// Pixelwise mean of the members.
Field2D ensemble_mean(std::span<const Field2D> members);
/// Pixelwise sample variance (M - 1 normalisation).
Field2D ensemble_variance(std::span<const Field2D> members);

}  // namespace podiff
