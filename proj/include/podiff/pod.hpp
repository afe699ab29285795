#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "podiff/field.hpp"
#include "podiff/tensor.hpp"

namespace podiff {

enum class CoeffUnits { kPhysical, kStandardized };

/// Latent coefficient vector tagged with its units.
struct CoeffVec {
    Vec values;
    CoeffUnits units = CoeffUnits::kPhysical;

    std::size_t size() const noexcept { return static_cast<std::size_t>(values.size()); }
};

/// Mean field plus orthonormal spatial modes (d x K) and the variance spectrum.
///
/// `eigenvalues` keeps every non-negligible covariance eigenvalue found during
/// fitting, not just the K retained modes, so truncation is a cheap view.
/// Random-basis ablations carry an empty spectrum.
struct PodBasis {
    Field2D mean;
    Mat modes;
    Vec eigenvalues;
    double total_variance = 0.0;

    std::size_t dim() const noexcept { return static_cast<std::size_t>(modes.rows()); }
    std::size_t rank() const noexcept { return static_cast<std::size_t>(modes.cols()); }
    /// First k modes; the spectrum is kept whole.
    PodBasis truncated(std::size_t k) const;
    /// Mode k (0-based) as a field on the mean's grid.
    Field2D mode_field(std::size_t k) const;
};

/// Method of snapshots: eigendecompose the N x N Gram matrix of centred
/// snapshots with jacobi_eigh, lift eigenvectors to unit-norm spatial modes and
/// report covariance eigenvalues (Gram eigenvalues / N). Eigenvalues below
/// 1e-12 * lambda_1 are dropped; at most `max_modes` modes are materialised.
PodBasis compute_pod(std::span<const Field2D> snapshots, std::size_t max_modes);

/// Smallest K whose cumulative variance fraction reaches eta.
std::size_t select_k(std::span<const double> eigenvalues, double eta);
std::size_t select_k(const Vec& eigenvalues, double eta);

/// Cumulative explained-variance fractions (entry k covers modes 0..k).
std::vector<double> cumulative_variance(const Vec& eigenvalues, double total_variance);

CoeffVec project(const PodBasis& basis, const Field2D& f);
/// Rows of the result are the physical coefficients of each field.
Mat project_many(const PodBasis& basis, std::span<const Field2D> fields);
Field2D reconstruct(const PodBasis& basis, const CoeffVec& a);
/// Mean squared reconstruction error per pixel over `fields`.
double reconstruction_mse(const PodBasis& basis, std::span<const Field2D> fields);

/// Per-mode affine map between physical and standardised coefficients.
/// Uses the sample (N - 1) standard deviation, floored at `floor`.
class CoeffStandardizer {
public:
    static constexpr double kDefaultFloor = 1e-8;

    CoeffStandardizer() = default;
    CoeffStandardizer(Vec mean, Vec stddev, double floor = kDefaultFloor);

    /// Rows of `coeffs` are samples; needs at least two.
    static CoeffStandardizer fit(const Mat& coeffs, double floor = kDefaultFloor);

    CoeffVec standardize(const CoeffVec& a) const;
    CoeffVec destandardize(const CoeffVec& z) const;
    /// Row-wise versions on sample matrices.
    Mat standardize_rows(const Mat& a) const;
    Mat destandardize_rows(const Mat& z) const;

    CoeffStandardizer truncated(std::size_t k) const;

    const Vec& mean() const noexcept { return mean_; }
    const Vec& stddev() const noexcept { return std_; }
    double floor() const noexcept { return floor_; }
    std::size_t size() const noexcept { return static_cast<std::size_t>(mean_.size()); }

private:
    Vec mean_;
    Vec std_;
    double floor_ = kDefaultFloor;
};

/// Sample covariance (M - 1 normalisation) of the rows of `samples`.
Mat sample_covariance(const Mat& samples);

/// Pixel variances diag(Phi S Phi^T) where S is `sigma_std` rescaled to
/// physical units by the standardizer (S_jk = sigma_j sigma_k Sigma_jk).
/// The d x d matrix is never formed. Tiny negative round-off is clamped to 0.
Field2D propagate_covariance(const PodBasis& basis, const CoeffStandardizer& standardizer,
                             const Mat& sigma_std);

/// Random orthonormal d x K basis (QR of a Gaussian matrix) sharing `mean`.
PodBasis random_orthonormal_basis(RngStream& stream, std::size_t d, std::size_t k,
                                  const Field2D& mean);

}  // namespace podiff
