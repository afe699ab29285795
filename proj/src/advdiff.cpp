#include "podiff/advdiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

namespace podiff {

void AdvDiffParams::validate() const {
    if (!(kappa >= 0.0)) throw std::invalid_argument("AdvDiffParams: kappa must be >= 0");
    if (!(dt > 0.0)) throw std::invalid_argument("AdvDiffParams: dt must be > 0");
    if (!is_power_of_two(nx) || !is_power_of_two(ny)) {
        throw std::invalid_argument("AdvDiffParams: grid dimensions must be powers of two");
    }
}

ComplexGrid smooth_ic_spectrum(RngStream& stream, std::size_t nx, std::size_t ny,
                               const InitialSpectrum& spec) {
    if (!is_power_of_two(nx) || !is_power_of_two(ny)) {
        throw std::invalid_argument("smooth_ic_spectrum: grid dimensions must be powers of two");
    }
    const double limit = static_cast<double>(std::min(nx, ny)) / 2.0;
    if (!(spec.cutoff > 0.0) || !(spec.cutoff < limit)) {
        throw std::invalid_argument("smooth_ic_spectrum: cutoff must lie in (0, min(nx, ny)/2)");
    }
    if (!(spec.width > 0.0)) throw std::invalid_argument("smooth_ic_spectrum: width must be > 0");

    ComplexGrid s(nx, ny);
    for (std::size_t iy = 0; iy < ny; ++iy) {
        for (std::size_t ix = 0; ix < nx; ++ix) {
            const long kx = wavenumber(ix, nx);
            const long ky = wavenumber(iy, ny);
            const double k2 = static_cast<double>(kx * kx + ky * ky);
            if (k2 == 0.0 || k2 > spec.cutoff * spec.cutoff) continue;
            const std::size_t jx = (nx - ix) % nx;
            const std::size_t jy = (ny - iy) % ny;
            const std::size_t self = iy * nx + ix;
            const std::size_t partner = jy * nx + jx;
            if (partner < self) continue;  // drawn together with its partner
            const double amp = std::exp(-k2 / (2.0 * spec.width * spec.width));
            const double re = stream.normal();
            const double im = stream.normal();
            s.data[self] = amp * Complex(re, im);
            s.data[partner] = std::conj(s.data[self]);
        }
    }
    return s;
}

Field2D random_smooth_ic(RngStream& stream, std::size_t nx, std::size_t ny,
                         const InitialSpectrum& spec) {
    const ComplexGrid field = ifft2(smooth_ic_spectrum(stream, nx, ny, spec));
    std::vector<double> values(nx * ny);
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = field.data[i].real();
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) /
                        static_cast<double>(values.size());
    double peak = 0.0;
    for (double& v : values) {
        v -= mean;
        peak = std::max(peak, std::abs(v));
    }
    if (peak > 0.0) {
        for (double& v : values) v /= peak;
    }
    return Field2D(nx, ny, std::move(values));
}

std::vector<Field2D> propagate_many(const Field2D& u0, const AdvDiffParams& p,
                                    const std::vector<std::size_t>& steps) {
    p.validate();
    if (u0.nx() != p.nx || u0.ny() != p.ny) {
        throw std::invalid_argument("propagate: field dimensions do not match parameters");
    }
    const ComplexGrid spectrum = fft2(u0.values(), u0.nx(), u0.ny());
    const double two_pi = 2.0 * std::numbers::pi;
    std::vector<Field2D> out;
    out.reserve(steps.size());
    for (std::size_t n : steps) {
        const double t = static_cast<double>(n) * p.dt;
        ComplexGrid evolved = spectrum;
        for (std::size_t iy = 0; iy < p.ny; ++iy) {
            const long ky = wavenumber(iy, p.ny);
            const double ky_adv = (2 * static_cast<std::size_t>(std::abs(ky)) == p.ny) ? 0.0 : static_cast<double>(ky);
            for (std::size_t ix = 0; ix < p.nx; ++ix) {
                const long kx = wavenumber(ix, p.nx);
                const double kx_adv = (2 * static_cast<std::size_t>(std::abs(kx)) == p.nx) ? 0.0 : static_cast<double>(kx);
                const double k2 = static_cast<double>(kx * kx + ky * ky);
                const double decay = -p.kappa * two_pi * two_pi * k2 * t;
                const double phase = -two_pi * (kx_adv * p.vx + ky_adv * p.vy) * t;
                evolved(ix, iy) *= std::exp(decay) * Complex(std::cos(phase), std::sin(phase));
            }
        }
        const ComplexGrid field = ifft2(evolved);
        std::vector<double> values(field.data.size());
        for (std::size_t i = 0; i < values.size(); ++i) values[i] = field.data[i].real();
        out.emplace_back(p.nx, p.ny, std::move(values));
    }
    return out;
}

Field2D propagate(const Field2D& u0, const AdvDiffParams& p, std::size_t n_steps) {
    return std::move(propagate_many(u0, p, {n_steps}).front());
}

Trajectory generate_trajectory(const RngStream& stream, std::size_t id, const DatasetConfig& cfg) {
    RngStream s = stream.child("traj/" + std::to_string(id));
    Trajectory traj;
    traj.id = id;
    traj.params.nx = cfg.nx;
    traj.params.ny = cfg.ny;
    traj.params.dt = cfg.dt;
    traj.params.vx = s.uniform(-cfg.velocity_max, cfg.velocity_max);
    traj.params.vy = s.uniform(-cfg.velocity_max, cfg.velocity_max);
    traj.params.kappa = std::exp(s.uniform(std::log(cfg.kappa_min), std::log(cfg.kappa_max)));
    const Field2D u0 = random_smooth_ic(s, cfg.nx, cfg.ny, cfg.spectrum);
    traj.steps = cfg.steps;
    traj.snapshots = propagate_many(u0, traj.params, cfg.steps);
    return traj;
}

Dataset generate_dataset(const RngStream& stream, const DatasetConfig& cfg) {
    if (cfg.n_traj < 5) throw std::invalid_argument("generate_dataset: need at least 5 trajectories");
    if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0)) {
        throw std::invalid_argument("generate_dataset: test_fraction must lie in (0, 1)");
    }
    if (!(cfg.kappa_min > 0.0 && cfg.kappa_min <= cfg.kappa_max)) {
        throw std::invalid_argument("generate_dataset: invalid diffusivity range");
    }
    Dataset ds;
    ds.trajectories.reserve(cfg.n_traj);
    for (std::size_t i = 0; i < cfg.n_traj; ++i) {
        ds.trajectories.push_back(generate_trajectory(stream, i, cfg));
    }

    std::vector<std::size_t> ids(cfg.n_traj);
    std::iota(ids.begin(), ids.end(), 0);
    RngStream split = stream.child("split");
    for (std::size_t i = ids.size() - 1; i > 0; --i) std::swap(ids[i], ids[split.index(i + 1)]);
    auto n_test = static_cast<std::size_t>(std::llround(cfg.test_fraction * static_cast<double>(cfg.n_traj)));
    n_test = std::clamp<std::size_t>(n_test, 1, cfg.n_traj - 1);
    ds.test_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test));
    ds.train_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_test), ids.end());
    std::sort(ds.test_ids.begin(), ds.test_ids.end());
    std::sort(ds.train_ids.begin(), ds.train_ids.end());
    return ds;
}

GridPair make_pair(const Field2D& hr, std::size_t factor) {
    if (factor == 0 || hr.nx() % factor != 0 || hr.ny() % factor != 0) {
        throw std::invalid_argument("make_pair: grid not divisible by the block factor");
    }
    GridPair pair;
    pair.hr = hr;
    pair.lr = block_average(hr, factor);
    pair.upsampled = bicubic_upsample(pair.lr, hr.nx(), hr.ny());
    return pair;
}

}  // namespace podiff
