#include "podiff/denoiser.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "podiff/error.hpp"

namespace podiff {

void MlpConfig::validate() const {
    if (latent_dim == 0 || hidden == 0 || timesteps == 0) {
        throw std::invalid_argument("MlpConfig: dimensions must be positive");
    }
    if (embed_dim == 0 || embed_dim % 2 != 0) {
        throw std::invalid_argument("MlpConfig: embedding dimension must be even and positive");
    }
}

std::size_t MlpConfig::parameter_count() const {
    const std::size_t k = latent_dim, h = hidden, e = embed_dim;
    return 2 * k * h + h + e * h + h + blocks * (2 * h * h + 2 * h) + h * k + k;
}

std::vector<double> time_embed(std::size_t t, std::size_t total_steps, std::size_t dim) {
    if (dim == 0 || dim % 2 != 0) throw std::invalid_argument("time_embed: dimension must be even");
    if (t > total_steps) throw std::invalid_argument("time_embed: t exceeds total steps");
    const std::size_t half = dim / 2;
    std::vector<double> out(dim);
    const double log_base = std::log(10000.0);
    for (std::size_t i = 0; i < half; ++i) {
        const double frac = half > 1 ? static_cast<double>(i) / static_cast<double>(half - 1) : 0.0;
        const double arg = static_cast<double>(t) * std::exp(-log_base * frac);
        out[i] = std::sin(arg);
        out[half + i] = std::cos(arg);
    }
    return out;
}

MlpParams::MlpParams(const MlpConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const std::size_t k = cfg_.latent_dim, h = cfg_.hidden, e = cfg_.embed_dim;
    std::size_t pos = 0;
    auto take = [&](std::size_t n, bool weight) {
        const std::size_t at = pos;
        pos += n;
        weight_mask_.insert(weight_mask_.end(), n, weight ? 1 : 0);
        return at;
    };
    off_.w_in = take(h * 2 * k, true);
    off_.b_in = take(h, false);
    off_.w_t = take(h * e, true);
    off_.b_t = take(h, false);
    for (std::size_t b = 0; b < cfg_.blocks; ++b) {
        off_.w1.push_back(take(h * h, true));
        off_.b1.push_back(take(h, false));
        off_.w2.push_back(take(h * h, true));
        off_.b2.push_back(take(h, false));
    }
    off_.w_out = take(k * h, true);
    off_.b_out = take(k, false);
    blob_.assign(pos, 0.0);
}

MlpParams MlpParams::init(const MlpConfig& cfg, RngStream& stream) {
    MlpParams p(cfg);
    const std::size_t k = cfg.latent_dim, h = cfg.hidden, e = cfg.embed_dim;
    auto fill = [&](std::size_t offset, std::size_t n, std::size_t fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t i = 0; i < n; ++i) p.blob_[offset + i] = stream.uniform(-bound, bound);
    };
    fill(p.off_.w_in, h * 2 * k, 2 * k);
    fill(p.off_.w_t, h * e, e);
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        fill(p.off_.w1[b], h * h, h);
        fill(p.off_.w2[b], h * h, h);
    }
    return p;
}

MlpParams::ConstMatMap MlpParams::mat(std::size_t offset, std::size_t rows, std::size_t cols) const {
    return {blob_.data() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

MlpParams::ConstVecMap MlpParams::vec(std::size_t offset, std::size_t n) const {
    return {blob_.data() + offset, static_cast<Eigen::Index>(n)};
}

void MlpParams::scale_output(double s) {
    const std::size_t n = cfg_.latent_dim * cfg_.hidden;
    for (std::size_t i = 0; i < n; ++i) blob_[off_.w_out + i] *= s;
    mark_modified();
}

namespace {

Mat silu(const Mat& x) { return (x.array() / (1.0 + (-x.array()).exp())).matrix(); }

Mat silu_grad(const Mat& x) {
    const Eigen::ArrayXXd sig = 1.0 / (1.0 + (-x.array()).exp());
    return (sig * (1.0 + x.array() * (1.0 - sig))).matrix();
}

void check_finite(const Mat& m, std::size_t layer, const char* name) {
    if (!m.allFinite()) {
        throw NumericalFailure("denoiser forward: non-finite activation in layer " + std::to_string(layer) +
                               " (" + name + ")");
    }
}

// y = x W^T + b for a row-major (out x in) weight matrix.
Mat affine(const Mat& x, const MlpParams::ConstMatMap& w, const MlpParams::ConstVecMap& b) {
    Mat y = x * w.transpose();
    y.rowwise() += b.transpose();
    return y;
}

}  // namespace

Mat forward(const MlpParams& params, const Mat& a_t, const Mat& c, std::span<const std::size_t> t,
            ForwardCache* cache) {
    const MlpConfig& cfg = params.config();
    const auto k = static_cast<Eigen::Index>(cfg.latent_dim);
    const Eigen::Index n = a_t.rows();
    if (a_t.cols() != k || c.cols() != k || c.rows() != n || t.size() != static_cast<std::size_t>(n)) {
        throw std::invalid_argument("denoiser forward: input shape mismatch");
    }
    const auto& off = params.offsets();
    const std::size_t h = cfg.hidden, e = cfg.embed_dim;

    Mat input(n, 2 * k);
    input.leftCols(k) = a_t;
    input.rightCols(k) = c;
    Mat embed(n, static_cast<Eigen::Index>(e));
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto row = time_embed(t[static_cast<std::size_t>(r)], cfg.timesteps, e);
        embed.row(r) = Eigen::Map<const Eigen::RowVectorXd>(row.data(), static_cast<Eigen::Index>(e));
    }

    Mat hcur = affine(input, params.mat(off.w_in, h, 2 * cfg.latent_dim), params.vec(off.b_in, h));
    check_finite(hcur, 0, "input projection");
    const Mat tau = affine(embed, params.mat(off.w_t, h, e), params.vec(off.b_t, h));
    check_finite(tau, 1, "time projection");

    if (cache) {
        cache->h.clear();
        cache->z.clear();
        cache->u.clear();
    }
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        Mat z = hcur + tau;
        Mat u = affine(silu(z), params.mat(off.w1[b], h, h), params.vec(off.b1[b], h));
        check_finite(u, 2 + 2 * b, "block first layer");
        Mat v = affine(silu(u), params.mat(off.w2[b], h, h), params.vec(off.b2[b], h));
        check_finite(v, 3 + 2 * b, "block second layer");
        if (cache) {
            cache->h.push_back(hcur);
            cache->z.push_back(std::move(z));
            cache->u.push_back(std::move(u));
        }
        hcur += v;
    }
    Mat out = affine(silu(hcur), params.mat(off.w_out, cfg.latent_dim, h), params.vec(off.b_out, cfg.latent_dim));
    check_finite(out, 2 + 2 * cfg.blocks, "output projection");

    if (cache) {
        cache->params = &params;
        cache->params_version = params.version();
        cache->input = std::move(input);
        cache->embed = std::move(embed);
        cache->tau = tau;
        cache->h.push_back(std::move(hcur));
        cache->output = out;
    }
    return out;
}

std::vector<double> backward(const MlpParams& params, const ForwardCache& cache, const Mat& grad_output) {
    if (cache.params != &params || cache.params_version != params.version()) {
        throw std::logic_error("denoiser backward: cache does not belong to the current parameters");
    }
    const MlpConfig& cfg = params.config();
    const auto& off = params.offsets();
    const std::size_t h = cfg.hidden, e = cfg.embed_dim, k = cfg.latent_dim;
    if (grad_output.rows() != cache.output.rows() || grad_output.cols() != cache.output.cols() ||
        cache.h.size() != cfg.blocks + 1) {
        throw std::logic_error("denoiser backward: gradient shape does not match cache");
    }

    std::vector<double, Eigen::aligned_allocator<double>> grad(params.size(), 0.0);
    auto gmat = [&](std::size_t offset, std::size_t rows, std::size_t cols) {
        return Eigen::Map<Mat>(grad.data() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    };
    auto gvec = [&](std::size_t offset, std::size_t n) {
        return Eigen::Map<Vec>(grad.data() + offset, static_cast<Eigen::Index>(n));
    };

    const Mat& h_final = cache.h.back();
    gmat(off.w_out, k, h) = grad_output.transpose() * silu(h_final);
    gvec(off.b_out, k) = grad_output.colwise().sum().transpose();
    Mat dh = (grad_output * params.mat(off.w_out, k, h)).cwiseProduct(silu_grad(h_final));
    Mat dtau = Mat::Zero(dh.rows(), dh.cols());

    for (std::size_t bi = cfg.blocks; bi-- > 0;) {
        const Mat& z = cache.z[bi];
        const Mat& u = cache.u[bi];
        gmat(off.w2[bi], h, h) = dh.transpose() * silu(u);
        gvec(off.b2[bi], h) = dh.colwise().sum().transpose();
        const Mat du = (dh * params.mat(off.w2[bi], h, h)).cwiseProduct(silu_grad(u));
        gmat(off.w1[bi], h, h) = du.transpose() * silu(z);
        gvec(off.b1[bi], h) = du.colwise().sum().transpose();
        const Mat dz = (du * params.mat(off.w1[bi], h, h)).cwiseProduct(silu_grad(z));
        dh += dz;
        dtau += dz;
    }

    gmat(off.w_in, h, 2 * k) = dh.transpose() * cache.input;
    gvec(off.b_in, h) = dh.colwise().sum().transpose();
    gmat(off.w_t, h, e) = dtau.transpose() * cache.embed;
    gvec(off.b_t, h) = dtau.colwise().sum().transpose();
    return {grad.begin(), grad.end()};
}

void adamw_step(AdamWState& state, std::span<double> params, std::span<const double> grads,
                std::span<const std::uint8_t> decay_mask) {
    const std::size_t n = params.size();
    if (grads.size() != n || decay_mask.size() != n || state.m.size() != n || state.v.size() != n) {
        throw std::invalid_argument("adamw_step: shape mismatch");
    }
    const AdamWConfig& c = state.cfg;
    ++state.step;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    const double decay = 1.0 - c.lr * c.weight_decay;
    for (std::size_t i = 0; i < n; ++i) {
        if (decay_mask[i]) params[i] *= decay;
        state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * grads[i];
        state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * grads[i] * grads[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
}

void adamw_step(AdamWState& state, MlpParams& params, std::span<const double> grads) {
    adamw_step(state, params.data(), grads, params.weight_mask());
    params.mark_modified();
}

}  // namespace podiff
