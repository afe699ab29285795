#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace podiff {

/// Dense row-major matrix used for snapshot matrices, bases and covariances.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using Complex = std::complex<double>;

struct EighResult {
    Vec values;   // descending
    Mat vectors;  // column k pairs with values[k]
};

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// Sweeps until the off-diagonal Frobenius norm drops below 1e-14 * ||A||_F
/// (at most 100 sweeps). Eigenvalues come back sorted descending and each
/// eigenvector is signed so that its largest-magnitude entry is positive.
/// Throws std::invalid_argument for non-symmetric or non-finite input and
/// NumericalFailure if the sweep limit is hit.
EighResult jacobi_eigh(const Mat& a);

/// Orthonormal factor of a thin QR decomposition (d >= K), computed with
/// re-orthogonalized modified Gram-Schmidt so that R has a positive diagonal.
/// Throws std::invalid_argument when a column becomes numerically dependent.
Mat qr_q(const Mat& a);

bool is_power_of_two(std::size_t n);

/// Complex values on an nx-by-ny grid, x fastest (index = iy * nx + ix).
struct ComplexGrid {
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::vector<Complex> data;

    ComplexGrid() = default;
    ComplexGrid(std::size_t nx_, std::size_t ny_) : nx(nx_), ny(ny_), data(nx_ * ny_) {}

    Complex& operator()(std::size_t ix, std::size_t iy) { return data[iy * nx + ix]; }
    const Complex& operator()(std::size_t ix, std::size_t iy) const { return data[iy * nx + ix]; }
};

/// Unnormalized forward 2-D DFT (radix-2). Both dimensions must be powers of two.
ComplexGrid fft2(std::span<const double> values, std::size_t nx, std::size_t ny);
ComplexGrid fft2(const ComplexGrid& grid);
/// Inverse transform including the 1/(nx*ny) factor.
ComplexGrid ifft2(const ComplexGrid& spectrum);

/// Signed integer wavenumber of DFT index i on an n-point axis.
inline long wavenumber(std::size_t i, std::size_t n) {
    return i < (n + 1) / 2 ? static_cast<long>(i) : static_cast<long>(i) - static_cast<long>(n);
}

/// Deterministic labelled random stream.
///
/// The engine is std::mt19937_64 keyed by splitmix64(seed ^ fnv1a(stream id)),
/// so identical (seed, id) pairs replay identically and distinct ids are
/// independent. Uniform doubles use the top 53 bits; Gaussians come from
/// Box-Muller on consecutive uniforms (the second variate is cached).
/// A stream is single-owner; give each parallel consumer its own child().
class RngStream {
public:
    RngStream(std::uint64_t seed, std::string id);

    RngStream child(std::string_view label) const;

    std::uint64_t seed() const noexcept { return seed_; }
    const std::string& id() const noexcept { return id_; }
    /// The 64-bit key the engine was seeded with (recorded in run manifests).
    std::uint64_t key() const noexcept { return key_; }

    std::uint64_t next_u64();
    /// Uniform on [0, 1).
    double uniform();
    double uniform(double lo, double hi);
    double normal();
    /// Uniform integer on [0, n).
    std::size_t index(std::size_t n);

    std::vector<double> randn(std::size_t n);
    void randn(std::span<double> out);
    std::vector<double> rand_uniform(double lo, double hi, std::size_t n);

private:
    std::uint64_t seed_;
    std::string id_;
    std::uint64_t key_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view text);

}  // namespace podiff
