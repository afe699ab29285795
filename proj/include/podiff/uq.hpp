#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "podiff/field.hpp"

namespace podiff {

using Members = std::span<const Field2D>;

struct ErrorStats {
    double rmse = 0.0;
    double mae = 0.0;
    std::size_t count = 0;
};

/// RMSE and MAE over pixels valid in both the truth mask and `mask`.
ErrorStats rmse_mae(const Field2D& pred, const Field2D& truth, const std::optional<Mask>& mask = std::nullopt);

/// Empirical quantile of sorted data by linear interpolation between order
/// statistics at fractional index h = (n - 1) p.
double quantile_sorted(std::span<const double> sorted, double p);
double empirical_quantile(std::vector<double> values, double p);

/// Marks valid truth pixels strictly above the q-quantile of `reference`;
/// q = 0 marks every valid pixel.
Mask extreme_mask(const Field2D& truth, double q, std::span<const double> reference);
/// The threshold used by extreme_mask (-inf for q = 0), for reuse across many fields.
double extreme_threshold(std::span<const double> reference, double q);
Mask mask_above(const Field2D& truth, double threshold);

/// Fraction of valid pixels whose truth lies in the inclusive central interval
/// [Q((1-p)/2), Q((1+p)/2)] of the members, one entry per level.
std::vector<double> coverage(Members members, const Field2D& truth, std::span<const double> levels,
                             const std::optional<Mask>& mask = std::nullopt);
double coverage(Members members, const Field2D& truth, double level, const std::optional<Mask>& mask = std::nullopt);

struct ReliabilityCurve {
    std::vector<double> levels;
    std::vector<std::vector<double>> per_case;  // [case][level]
    std::vector<double> mean;                   // average of the per-case curves
    std::vector<double> pooled;                 // all valid pixels of all cases together
};

/// With `members` > 0 only the first `members` of each ensemble are used.
ReliabilityCurve reliability_curve(std::span<const std::vector<Field2D>> ensembles, std::span<const Field2D> truths,
                                   std::span<const double> levels, std::span<const Mask> masks = {},
                                   std::size_t members = 0);

/// Mean absolute deviation between empirical and nominal coverage.
double mace(std::span<const double> empirical, std::span<const double> levels);
double mace(const ReliabilityCurve& curve);

/// Ensemble CRPS for one scalar. The fair estimator divides the spread term by
/// 2M(M - 1) instead of 2M^2 and needs M >= 2.
double crps_ensemble(std::span<const double> members, double y, bool fair = false);
/// Mean pixelwise CRPS over valid pixels.
double crps_field(Members members, const Field2D& truth, const std::optional<Mask>& mask = std::nullopt,
                  bool fair = false);

/// Per-pixel coverage frequency across cases minus the nominal level. Pixels
/// never valid are masked out of the result.
Field2D spatial_calibration_map(std::span<const std::vector<Field2D>> ensembles, std::span<const Field2D> truths,
                                double level, std::span<const Mask> masks = {}, std::size_t members = 0);

struct SweepRow {
    std::size_t members = 0;
    double level = 0.0;
    double coverage = 0.0;  // per-case mean
    double pooled = 0.0;
};

/// Coverage for nested prefixes of each ensemble (the first m members).
std::vector<SweepRow> ensemble_size_sweep(std::span<const std::vector<Field2D>> ensembles,
                                          std::span<const Field2D> truths, std::span<const std::size_t> sizes,
                                          std::span<const double> levels, std::span<const Mask> masks = {});

struct MetricReport {
    std::string method;
    double rmse = 0.0;
    double mae = 0.0;
    double extreme_rmse = 0.0;
    double extreme_mae = 0.0;
    std::vector<double> levels;
    std::vector<double> coverage;  // empty for deterministic methods
    double mace = 0.0;
    double crps = 0.0;
};

}  // namespace podiff
