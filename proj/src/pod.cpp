#include "podiff/pod.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace podiff {

PodBasis PodBasis::truncated(std::size_t k) const {
    if (k == 0 || k > rank()) {
        throw std::invalid_argument("PodBasis::truncated: k must lie in [1, " + std::to_string(rank()) + "]");
    }
    PodBasis out;
    out.mean = mean;
    out.modes = modes.leftCols(static_cast<Eigen::Index>(k));
    out.eigenvalues = eigenvalues;
    out.total_variance = total_variance;
    return out;
}

Field2D PodBasis::mode_field(std::size_t k) const {
    if (k >= rank()) throw std::out_of_range("PodBasis::mode_field: index out of range");
    std::vector<double> v(dim());
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = modes(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    }
    return Field2D(mean.nx(), mean.ny(), std::move(v));
}

namespace {

Eigen::Map<const Vec> as_vec(const Field2D& f) {
    return {f.values().data(), static_cast<Eigen::Index>(f.size())};
}

void check_grid(const PodBasis& basis, const Field2D& f, const char* what) {
    if (!f.same_grid(basis.mean)) throw std::invalid_argument(std::string(what) + ": grid mismatch");
}

}  // namespace

PodBasis compute_pod(std::span<const Field2D> snapshots, std::size_t max_modes) {
    const std::size_t n = snapshots.size();
    if (n < 2) throw std::invalid_argument("compute_pod: need at least 2 snapshots");
    if (max_modes == 0) throw std::invalid_argument("compute_pod: max_modes must be >= 1");
    const Field2D& first = snapshots.front();
    const std::size_t d = first.size();
    for (const Field2D& s : snapshots) {
        if (!s.same_grid(first)) throw std::invalid_argument("compute_pod: snapshots on different grids");
    }

    Vec mean = Vec::Zero(static_cast<Eigen::Index>(d));
    for (const Field2D& s : snapshots) mean += as_vec(s);
    mean /= static_cast<double>(n);

    Mat centered(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < n; ++j) {
        centered.col(static_cast<Eigen::Index>(j)) = as_vec(snapshots[j]) - mean;
    }
    Mat gram = centered.transpose() * centered;
    gram = 0.5 * (gram + gram.transpose()).eval();

    const EighResult eig = jacobi_eigh(gram);
    const double top = eig.values[0];
    if (!(top > 0.0)) throw std::invalid_argument("compute_pod: snapshots have zero variance");

    std::size_t kept = 0;
    while (kept < n && eig.values[static_cast<Eigen::Index>(kept)] >= 1e-12 * top) ++kept;
    const std::size_t k = std::min(kept, max_modes);

    PodBasis basis;
    basis.mean = Field2D(first.nx(), first.ny(), std::vector<double>(mean.data(), mean.data() + d));
    basis.eigenvalues = eig.values.head(static_cast<Eigen::Index>(kept)) / static_cast<double>(n);
    basis.total_variance = basis.eigenvalues.sum();
    basis.modes = centered * eig.vectors.leftCols(static_cast<Eigen::Index>(k));
    for (Eigen::Index j = 0; j < basis.modes.cols(); ++j) {
        basis.modes.col(j).normalize();
    }
    return basis;
}

std::size_t select_k(std::span<const double> eigenvalues, double eta) {
    if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("select_k: eta must lie in (0, 1)");
    double total = 0.0;
    for (std::size_t i = 0; i < eigenvalues.size(); ++i) {
        if (eigenvalues[i] < 0.0 || (i > 0 && eigenvalues[i] > eigenvalues[i - 1])) {
            throw std::invalid_argument("select_k: eigenvalues must be non-negative and non-increasing");
        }
        total += eigenvalues[i];
    }
    if (!(total > 0.0)) throw std::invalid_argument("select_k: all eigenvalues are zero");
    double cum = 0.0;
    for (std::size_t i = 0; i < eigenvalues.size(); ++i) {
        cum += eigenvalues[i];
        if (cum / total >= eta) return i + 1;
    }
    return eigenvalues.size();
}

std::size_t select_k(const Vec& eigenvalues, double eta) {
    return select_k(std::span<const double>(eigenvalues.data(), static_cast<std::size_t>(eigenvalues.size())), eta);
}

std::vector<double> cumulative_variance(const Vec& eigenvalues, double total_variance) {
    std::vector<double> out(static_cast<std::size_t>(eigenvalues.size()));
    double cum = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        cum += eigenvalues[static_cast<Eigen::Index>(i)];
        out[i] = total_variance > 0.0 ? cum / total_variance : 0.0;
    }
    return out;
}

CoeffVec project(const PodBasis& basis, const Field2D& f) {
    check_grid(basis, f, "project");
    return {basis.modes.transpose() * (as_vec(f) - as_vec(basis.mean)), CoeffUnits::kPhysical};
}

Mat project_many(const PodBasis& basis, std::span<const Field2D> fields) {
    Mat centered(static_cast<Eigen::Index>(fields.size()), static_cast<Eigen::Index>(basis.dim()));
    for (std::size_t i = 0; i < fields.size(); ++i) {
        check_grid(basis, fields[i], "project_many");
        centered.row(static_cast<Eigen::Index>(i)) = (as_vec(fields[i]) - as_vec(basis.mean)).transpose();
    }
    return centered * basis.modes;
}

Field2D reconstruct(const PodBasis& basis, const CoeffVec& a) {
    if (a.size() != basis.rank()) throw std::invalid_argument("reconstruct: coefficient length mismatch");
    if (a.units != CoeffUnits::kPhysical) {
        throw std::invalid_argument("reconstruct: coefficients must be in physical units");
    }
    const Vec v = as_vec(basis.mean) + basis.modes * a.values;
    return Field2D(basis.mean.nx(), basis.mean.ny(), std::vector<double>(v.data(), v.data() + v.size()));
}

double reconstruction_mse(const PodBasis& basis, std::span<const Field2D> fields) {
    if (fields.empty()) throw std::invalid_argument("reconstruction_mse: no fields");
    double total = 0.0;
    for (const Field2D& f : fields) {
        check_grid(basis, f, "reconstruction_mse");
        const Vec centered = as_vec(f) - as_vec(basis.mean);
        const Vec residual = centered - basis.modes * (basis.modes.transpose() * centered);
        total += residual.squaredNorm() / static_cast<double>(f.size());
    }
    return total / static_cast<double>(fields.size());
}

CoeffStandardizer::CoeffStandardizer(Vec mean, Vec stddev, double floor)
    : mean_(std::move(mean)), std_(std::move(stddev)), floor_(floor) {
    if (mean_.size() != std_.size()) throw std::invalid_argument("CoeffStandardizer: size mismatch");
    if (!(floor_ > 0.0)) throw std::invalid_argument("CoeffStandardizer: floor must be > 0");
    std_ = std_.cwiseMax(floor_);
}

CoeffStandardizer CoeffStandardizer::fit(const Mat& coeffs, double floor) {
    if (coeffs.rows() < 2) throw std::invalid_argument("CoeffStandardizer::fit: need at least 2 samples");
    const Vec mean = coeffs.colwise().mean().transpose();
    const Mat centered = coeffs.rowwise() - mean.transpose();
    const Vec var = centered.colwise().squaredNorm().transpose() / static_cast<double>(coeffs.rows() - 1);
    return CoeffStandardizer(mean, var.cwiseSqrt(), floor);
}

CoeffVec CoeffStandardizer::standardize(const CoeffVec& a) const {
    if (a.size() != size()) throw std::invalid_argument("standardize: length mismatch");
    if (a.units != CoeffUnits::kPhysical) throw std::invalid_argument("standardize: input already standardized");
    return {(a.values - mean_).cwiseQuotient(std_), CoeffUnits::kStandardized};
}

CoeffVec CoeffStandardizer::destandardize(const CoeffVec& z) const {
    if (z.size() != size()) throw std::invalid_argument("destandardize: length mismatch");
    if (z.units != CoeffUnits::kStandardized) throw std::invalid_argument("destandardize: input is physical");
    return {z.values.cwiseProduct(std_) + mean_, CoeffUnits::kPhysical};
}

Mat CoeffStandardizer::standardize_rows(const Mat& a) const {
    if (static_cast<std::size_t>(a.cols()) != size()) throw std::invalid_argument("standardize_rows: width mismatch");
    return (a.rowwise() - mean_.transpose()).array().rowwise() / std_.transpose().array();
}

Mat CoeffStandardizer::destandardize_rows(const Mat& z) const {
    if (static_cast<std::size_t>(z.cols()) != size()) throw std::invalid_argument("destandardize_rows: width mismatch");
    return (z.array().rowwise() * std_.transpose().array()).matrix().rowwise() + mean_.transpose();
}

CoeffStandardizer CoeffStandardizer::truncated(std::size_t k) const {
    if (k == 0 || k > size()) throw std::invalid_argument("CoeffStandardizer::truncated: bad size");
    return CoeffStandardizer(mean_.head(static_cast<Eigen::Index>(k)), std_.head(static_cast<Eigen::Index>(k)), floor_);
}

Mat sample_covariance(const Mat& samples) {
    if (samples.rows() < 2) throw std::invalid_argument("sample_covariance: need at least 2 samples");
    const Mat centered = samples.rowwise() - samples.colwise().mean();
    return centered.transpose() * centered / static_cast<double>(samples.rows() - 1);
}

Field2D propagate_covariance(const PodBasis& basis, const CoeffStandardizer& standardizer,
                             const Mat& sigma_std) {
    const auto k = static_cast<Eigen::Index>(basis.rank());
    if (sigma_std.rows() != k || sigma_std.cols() != k || static_cast<Eigen::Index>(standardizer.size()) != k) {
        throw std::invalid_argument("propagate_covariance: shape mismatch");
    }
    const double scale = sigma_std.cwiseAbs().maxCoeff();
    if ((sigma_std - sigma_std.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(scale, 1e-300)) {
        throw std::invalid_argument("propagate_covariance: covariance is not symmetric");
    }
    const Vec& s = standardizer.stddev();
    const Mat physical = s.asDiagonal() * sigma_std * s.asDiagonal();
    const Mat weighted = basis.modes * physical;
    std::vector<double> var(basis.dim());
    for (std::size_t i = 0; i < var.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const double v = weighted.row(r).dot(basis.modes.row(r));
        var[i] = v < 0.0 ? 0.0 : v;
    }
    return Field2D(basis.mean.nx(), basis.mean.ny(), std::move(var));
}

PodBasis random_orthonormal_basis(RngStream& stream, std::size_t d, std::size_t k, const Field2D& mean) {
    if (k == 0 || k > d) throw std::invalid_argument("random_orthonormal_basis: need 1 <= K <= d");
    if (mean.size() != d) throw std::invalid_argument("random_orthonormal_basis: mean field size mismatch");
    Mat g(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(k));
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
        for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = stream.normal();
    }
    PodBasis basis;
    basis.mean = mean;
    basis.modes = qr_q(g);
    return basis;
}

}  // namespace podiff
