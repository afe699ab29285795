#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "podiff/tensor.hpp"

namespace podiff {

struct MlpConfig {
    std::size_t latent_dim = 40;   // K
    std::size_t hidden = 256;      // H
    std::size_t blocks = 4;        // B
    std::size_t embed_dim = 256;   // E, even
    std::size_t timesteps = 1000;  // T

    void validate() const;
    /// 2KH + H + EH + H + B(2H^2 + 2H) + HK + K.
    std::size_t parameter_count() const;
};

/// Sinusoidal embedding: first E/2 entries sin(t w_i), last E/2 cos(t w_i),
/// with w_i geometric from 1 down to 1/10000.
std::vector<double> time_embed(std::size_t t, std::size_t total_steps, std::size_t dim);

/// Parameters of the residual MLP noise predictor, stored as one flat blob.
///
/// Layout: input projection (H x 2K, H), time projection (H x E, H), then per
/// block two H x H layers with biases, then the output projection (K x H, K).
/// Forward pass:
///   h   = W_in [a_t, c] + b_in,   tau = W_t emb(t) + b_t
///   h  += W2 silu(W1 silu(h + tau) + b1) + b2      (per block)
///   eps = W_out silu(h) + b_out
class MlpParams {
public:
    MlpParams() = default;
    explicit MlpParams(const MlpConfig& cfg);

    /// Fan-in uniform init for hidden layers, zero biases and a zero output projection.
    static MlpParams init(const MlpConfig& cfg, RngStream& stream);

    const MlpConfig& config() const noexcept { return cfg_; }
    std::span<double> data() noexcept { return blob_; }
    std::span<const double> data() const noexcept { return blob_; }
    std::size_t size() const noexcept { return blob_.size(); }
    /// 1 for weight-matrix entries, 0 for biases.
    const std::vector<std::uint8_t>& weight_mask() const noexcept { return weight_mask_; }

    /// Incremented on every mutation through mark_modified(); caches record it.
    std::uint64_t version() const noexcept { return version_; }
    void mark_modified() noexcept { ++version_; }

    using MatMap = Eigen::Map<Mat>;
    using ConstMatMap = Eigen::Map<const Mat>;
    using VecMap = Eigen::Map<Vec>;
    using ConstVecMap = Eigen::Map<const Vec>;

    struct Offsets {
        std::size_t w_in, b_in, w_t, b_t, w_out, b_out;
        std::vector<std::size_t> w1, b1, w2, b2;
    };
    const Offsets& offsets() const noexcept { return off_; }

    ConstMatMap mat(std::size_t offset, std::size_t rows, std::size_t cols) const;
    ConstVecMap vec(std::size_t offset, std::size_t n) const;

    /// Multiply every output-projection weight (not bias) by s.
    void scale_output(double s);

private:
    MlpConfig cfg_;
    Offsets off_{};
    std::vector<double, Eigen::aligned_allocator<double>> blob_;  // fixed alignment keeps Eigen reductions bitwise repeatable
    std::vector<std::uint8_t> weight_mask_;
    std::uint64_t version_ = 0;
};

/// Activations kept by forward() for backward().
struct ForwardCache {
    std::uint64_t params_version = 0;
    const MlpParams* params = nullptr;
    Mat input;                // N x 2K
    Mat embed;                // N x E
    Mat tau;                  // N x H
    std::vector<Mat> h;       // block inputs, B + 1 entries (last is the final hidden state)
    std::vector<Mat> z;       // h + tau
    std::vector<Mat> u;       // W1 silu(z) + b1
    Mat output;               // N x K
};

/// Batched forward pass; rows of a_t and c are samples, t holds one step per row.
/// Throws NumericalFailure naming the layer if an activation becomes non-finite.
Mat forward(const MlpParams& params, const Mat& a_t, const Mat& c, std::span<const std::size_t> t,
            ForwardCache* cache = nullptr);

/// Exact reverse-mode gradient (same layout as the parameter blob) of a scalar
/// loss L given dL/d(eps_hat). Throws std::logic_error for a stale cache.
std::vector<double> backward(const MlpParams& params, const ForwardCache& cache, const Mat& grad_output);

struct AdamWConfig {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

struct AdamWState {
    AdamWConfig cfg;
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t step = 0;

    AdamWState() = default;
    AdamWState(const AdamWConfig& c, std::size_t n) : cfg(c), m(n, 0.0), v(n, 0.0) {}
};

/// One AdamW update with bias-corrected moments and decoupled weight decay
/// applied where `decay_mask` is set.
void adamw_step(AdamWState& state, std::span<double> params, std::span<const double> grads,
                std::span<const std::uint8_t> decay_mask);
void adamw_step(AdamWState& state, MlpParams& params, std::span<const double> grads);

}  // namespace podiff
