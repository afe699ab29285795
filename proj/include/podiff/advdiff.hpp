#pragma once

#include <cstddef>
#include <vector>

#include "podiff/field.hpp"
#include "podiff/tensor.hpp"

namespace podiff {

/// Constant-coefficient advection-diffusion on the periodic unit square.
struct AdvDiffParams {
    double vx = 0.0;     // domain lengths per unit time
    double vy = 0.0;
    double kappa = 0.0;  // domain lengths^2 per unit time
    double dt = 0.005;
    std::size_t nx = 128;
    std::size_t ny = 128;

    void validate() const;
};

/// Random initial-condition spectrum: complex Gaussian coefficients shaped by
/// exp(-|k|^2 / (2 width^2)) and zeroed for |k| > cutoff and for k = 0.
struct InitialSpectrum {
    double cutoff = 8.0;
    double width = 1.2;
};

struct Trajectory {
    std::size_t id = 0;
    AdvDiffParams params;
    std::vector<std::size_t> steps;
    std::vector<Field2D> snapshots;
};

struct DatasetConfig {
    std::size_t n_traj = 500;
    std::size_t nx = 128;
    std::size_t ny = 128;
    std::size_t factor = 4;
    double dt = 0.005;
    InitialSpectrum spectrum;
    std::vector<std::size_t> steps{50, 100, 150, 200};
    double test_fraction = 0.2;
    double velocity_max = 1.0;
    double kappa_min = 1e-4;
    double kappa_max = 5e-3;
};

struct Dataset {
    std::vector<Trajectory> trajectories;
    std::vector<std::size_t> train_ids;  // trajectory ids, ascending
    std::vector<std::size_t> test_ids;
};

/// Hermitian-symmetric band-limited spectrum drawn from `stream`.
ComplexGrid smooth_ic_spectrum(RngStream& stream, std::size_t nx, std::size_t ny,
                               const InitialSpectrum& spec);

/// Real field synthesised from smooth_ic_spectrum, shifted to zero mean and
/// scaled to unit max-abs.
Field2D random_smooth_ic(RngStream& stream, std::size_t nx, std::size_t ny,
                         const InitialSpectrum& spec);

/// Exact spectral solution at t = n_steps * dt. Each Fourier mode k is scaled
/// by exp(-i 2 pi k.v t - kappa (2 pi)^2 |k|^2 t); the Nyquist component of
/// the advective wavenumber is taken as zero so the output stays real.
Field2D propagate(const Field2D& u0, const AdvDiffParams& p, std::size_t n_steps);

/// Same propagator applied for several step counts from one forward FFT.
std::vector<Field2D> propagate_many(const Field2D& u0, const AdvDiffParams& p,
                                    const std::vector<std::size_t>& steps);

/// Trajectory `id` draws its parameters and initial condition from
/// stream.child("traj/<id>"), so trajectories are independent of generation order.
Trajectory generate_trajectory(const RngStream& stream, std::size_t id, const DatasetConfig& cfg);

/// n_traj trajectories and a trajectory-level train/test split drawn from
/// stream.child("split").
Dataset generate_dataset(const RngStream& stream, const DatasetConfig& cfg);

GridPair make_pair(const Field2D& hr, std::size_t factor = 4);

}  // namespace podiff
