#pragma once

#include <cstddef>
#include <vector>

#include "podiff/field.hpp"
#include "podiff/pod.hpp"
#include "podiff/tensor.hpp"

namespace podiff {

/// u = mean + Phi Phi^T (x_up - mean).
Field2D pod_projection(const PodBasis& basis, const Field2D& x_up);

enum class RbfKernel { kThinPlate, kGaussian };

struct RbfOptions {
    RbfKernel kernel = RbfKernel::kThinPlate;
    double ridge = 1e-8;
    /// Gaussian only: phi(r) = exp(-(r / length_scale)^2).
    double length_scale = 0.1;
};

/// Radial interpolant s(p) = sum_i w_i phi(|p - p_i|) + v0 + v1 x + v2 y with
/// sum_i w_i = sum_i w_i x_i = sum_i w_i y_i = 0. Coordinates live in the unit square.
struct RbfModel {
    RbfOptions options;
    std::vector<double> cx, cy;  // centers
    Vec weights;                 // one per center
    Eigen::Vector3d affine = Eigen::Vector3d::Zero();

    std::size_t centers() const noexcept { return cx.size(); }
    double operator()(double x, double y) const;
};

double rbf_kernel(const RbfOptions& opt, double r);

/// Fit to scattered points. Solves the ridged saddle-point system by eliminating
/// the affine block through the null space of the polynomial matrix, then a
/// Cholesky factorisation. Throws NumericalFailure for a singular system.
RbfModel rbf_fit_points(std::vector<double> x, std::vector<double> y, const std::vector<double>& values,
                        const RbfOptions& opt = {});

/// Fit to the valid cells of a low-resolution field, centers at cell centers.
RbfModel rbf_fit(const Field2D& lr, const RbfOptions& opt = {});

/// Evaluate at the cell centers of an nx-by-ny grid on the unit square.
Field2D rbf_eval(const RbfModel& model, std::size_t nx, std::size_t ny);

}  // namespace podiff
