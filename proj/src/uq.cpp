#include "podiff/uq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace podiff {

namespace {

void check_levels(std::span<const double> levels) {
    if (levels.empty()) throw std::invalid_argument("coverage: no levels");
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (!(levels[i] > 0.0 && levels[i] < 1.0)) throw std::invalid_argument("coverage: levels must lie in (0, 1)");
        if (i > 0 && !(levels[i] > levels[i - 1])) throw std::invalid_argument("coverage: levels must increase");
    }
}

void check_members(Members members, const Field2D& truth, std::size_t min_count, const char* what) {
    if (members.size() < min_count) {
        throw std::invalid_argument(std::string(what) + ": need at least " + std::to_string(min_count) + " members");
    }
    for (const Field2D& m : members) {
        if (!m.same_grid(truth)) throw std::invalid_argument(std::string(what) + ": member grid mismatch");
    }
}

std::optional<Mask> mask_at(std::span<const Mask> masks, std::size_t i) {
    if (masks.empty()) return std::nullopt;
    return masks[i];
}

Members prefix_of(const std::vector<Field2D>& ensemble, std::size_t prefix) {
    Members members(ensemble);
    if (prefix == 0) return members;
    if (members.size() < prefix) throw std::invalid_argument("ensemble smaller than the requested member count");
    return members.first(prefix);
}

struct CoverageCounts {
    std::vector<std::size_t> covered;
    std::size_t valid = 0;
};

CoverageCounts count_covered(Members members, const Field2D& truth, std::span<const double> levels,
                             const Mask& valid, std::vector<std::uint8_t>* per_pixel) {
    CoverageCounts out{std::vector<std::size_t>(levels.size(), 0), 0};
    if (per_pixel) per_pixel->assign(truth.size() * levels.size(), 0);
    std::vector<double> buf(members.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (!valid[i]) continue;
        ++out.valid;
        for (std::size_t m = 0; m < members.size(); ++m) buf[m] = members[m][i];
        std::sort(buf.begin(), buf.end());
        for (std::size_t l = 0; l < levels.size(); ++l) {
            const double lo = quantile_sorted(buf, 0.5 * (1.0 - levels[l]));
            const double hi = quantile_sorted(buf, 0.5 * (1.0 + levels[l]));
            if (truth[i] >= lo && truth[i] <= hi) {
                ++out.covered[l];
                if (per_pixel) (*per_pixel)[i * levels.size() + l] = 1;
            }
        }
    }
    return out;
}

}  // namespace

ErrorStats rmse_mae(const Field2D& pred, const Field2D& truth, const std::optional<Mask>& mask) {
    if (!pred.same_grid(truth)) throw std::invalid_argument("rmse_mae: grid mismatch");
    const Mask valid = effective_mask(truth, mask);
    ErrorStats s;
    double sq = 0.0, ab = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (!valid[i]) continue;
        const double d = pred[i] - truth[i];
        sq += d * d;
        ab += std::abs(d);
        ++s.count;
    }
    if (s.count == 0) throw std::invalid_argument("rmse_mae: no valid pixels");
    s.rmse = std::sqrt(sq / static_cast<double>(s.count));
    s.mae = ab / static_cast<double>(s.count);
    return s;
}

double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw std::invalid_argument("quantile: empty data");
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile: p must lie in [0, 1]");
    const double h = static_cast<double>(sorted.size() - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double empirical_quantile(std::vector<double> values, double p) {
    std::sort(values.begin(), values.end());
    return quantile_sorted(values, p);
}

double extreme_threshold(std::span<const double> reference, double q) {
    if (reference.empty()) throw std::invalid_argument("extreme_mask: empty reference");
    if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("extreme_mask: q must lie in [0, 1]");
    if (q == 0.0) return -std::numeric_limits<double>::infinity();
    return empirical_quantile({reference.begin(), reference.end()}, q);
}

Mask mask_above(const Field2D& truth, double threshold) {
    Mask out = effective_mask(truth);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<std::uint8_t>(out[i] && truth[i] > threshold);
    return out;
}

Mask extreme_mask(const Field2D& truth, double q, std::span<const double> reference) {
    return mask_above(truth, extreme_threshold(reference, q));
}

std::vector<double> coverage(Members members, const Field2D& truth, std::span<const double> levels,
                             const std::optional<Mask>& mask) {
    check_members(members, truth, 2, "coverage");
    check_levels(levels);
    const CoverageCounts c = count_covered(members, truth, levels, effective_mask(truth, mask), nullptr);
    if (c.valid == 0) throw std::invalid_argument("coverage: no valid pixels");
    std::vector<double> out(levels.size());
    for (std::size_t l = 0; l < levels.size(); ++l) {
        out[l] = static_cast<double>(c.covered[l]) / static_cast<double>(c.valid);
    }
    return out;
}

double coverage(Members members, const Field2D& truth, double level, const std::optional<Mask>& mask) {
    return coverage(members, truth, std::span<const double>(&level, 1), mask).front();
}

namespace {

// prefix == 0 uses every member.
ReliabilityCurve reliability_impl(std::span<const std::vector<Field2D>> ensembles, std::span<const Field2D> truths,
                                  std::span<const double> levels, std::span<const Mask> masks, std::size_t prefix) {
    if (ensembles.empty() || ensembles.size() != truths.size()) {
        throw std::invalid_argument("reliability_curve: need one ensemble per truth and at least one case");
    }
    if (!masks.empty() && masks.size() != truths.size()) throw std::invalid_argument("reliability_curve: mask count");
    check_levels(levels);
    ReliabilityCurve curve;
    curve.levels.assign(levels.begin(), levels.end());
    curve.mean.assign(levels.size(), 0.0);
    std::vector<std::size_t> covered(levels.size(), 0);
    std::size_t valid = 0;
    for (std::size_t c = 0; c < truths.size(); ++c) {
        const Members members = prefix_of(ensembles[c], prefix);
        check_members(members, truths[c], 2, "reliability_curve");
        const CoverageCounts cc =
            count_covered(members, truths[c], levels, effective_mask(truths[c], mask_at(masks, c)), nullptr);
        if (cc.valid == 0) throw std::invalid_argument("reliability_curve: case without valid pixels");
        std::vector<double> row(levels.size());
        for (std::size_t l = 0; l < levels.size(); ++l) {
            row[l] = static_cast<double>(cc.covered[l]) / static_cast<double>(cc.valid);
            curve.mean[l] += row[l];
            covered[l] += cc.covered[l];
        }
        valid += cc.valid;
        curve.per_case.push_back(std::move(row));
    }
    curve.pooled.resize(levels.size());
    for (std::size_t l = 0; l < levels.size(); ++l) {
        curve.mean[l] /= static_cast<double>(truths.size());
        curve.pooled[l] = static_cast<double>(covered[l]) / static_cast<double>(valid);
    }
    return curve;
}

}  // namespace

ReliabilityCurve reliability_curve(std::span<const std::vector<Field2D>> ensembles, std::span<const Field2D> truths,
                                   std::span<const double> levels, std::span<const Mask> masks, std::size_t members) {
    return reliability_impl(ensembles, truths, levels, masks, members);
}

double mace(std::span<const double> empirical, std::span<const double> levels) {
    if (empirical.empty() || empirical.size() != levels.size()) {
        throw std::invalid_argument("mace: need one empirical coverage per level");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < levels.size(); ++i) s += std::abs(empirical[i] - levels[i]);
    return s / static_cast<double>(levels.size());
}

double mace(const ReliabilityCurve& curve) { return mace(curve.mean, curve.levels); }

double crps_ensemble(std::span<const double> members, double y, bool fair) {
    const std::size_t m = members.size();
    if (m == 0) throw std::invalid_argument("crps_ensemble: empty ensemble");
    if (fair && m < 2) throw std::invalid_argument("crps_ensemble: fair estimator needs M >= 2");
    std::vector<double> x(members.begin(), members.end());
    std::sort(x.begin(), x.end());
    double abs_err = 0.0, spread = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        abs_err += std::abs(x[i] - y);
        // sum_{i,j} |x_i - x_j| = 2 sum_i x_(i) (2i - M + 1) for sorted x, 0-based i
        spread += x[i] * (2.0 * static_cast<double>(i) - static_cast<double>(m) + 1.0);
    }
    spread *= 2.0;
    const double md = static_cast<double>(m);
    const double denom = fair ? 2.0 * md * (md - 1.0) : 2.0 * md * md;
    return abs_err / md - spread / denom;
}

double crps_field(Members members, const Field2D& truth, const std::optional<Mask>& mask, bool fair) {
    check_members(members, truth, 1, "crps_field");
    const Mask valid = effective_mask(truth, mask);
    std::vector<double> buf(members.size());
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (!valid[i]) continue;
        for (std::size_t m = 0; m < members.size(); ++m) buf[m] = members[m][i];
        total += crps_ensemble(buf, truth[i], fair);
        ++count;
    }
    if (count == 0) throw std::invalid_argument("crps_field: no valid pixels");
    return total / static_cast<double>(count);
}

Field2D spatial_calibration_map(std::span<const std::vector<Field2D>> ensembles, std::span<const Field2D> truths,
                                double level, std::span<const Mask> masks, std::size_t members) {
    if (truths.size() < 2 || ensembles.size() != truths.size()) {
        throw std::invalid_argument("spatial_calibration_map: need at least 2 cases, one ensemble each");
    }
    if (!masks.empty() && masks.size() != truths.size()) throw std::invalid_argument("spatial_calibration_map: mask count");
    const double lv[1] = {level};
    check_levels(lv);
    const Field2D& first = truths.front();
    std::vector<double> hits(first.size(), 0.0), seen(first.size(), 0.0);
    std::vector<std::uint8_t> flags;
    for (std::size_t c = 0; c < truths.size(); ++c) {
        if (!truths[c].same_grid(first)) throw std::invalid_argument("spatial_calibration_map: grid mismatch");
        const Members ens = prefix_of(ensembles[c], members);
        check_members(ens, truths[c], 2, "spatial_calibration_map");
        const Mask valid = effective_mask(truths[c], mask_at(masks, c));
        count_covered(ens, truths[c], lv, valid, &flags);
        for (std::size_t i = 0; i < first.size(); ++i) {
            if (!valid[i]) continue;
            seen[i] += 1.0;
            hits[i] += flags[i];
        }
    }
    Field2D out(first.nx(), first.ny());
    Mask out_mask(first.size(), 1);
    bool any_missing = false;
    for (std::size_t i = 0; i < first.size(); ++i) {
        if (seen[i] > 0.0) {
            out[i] = hits[i] / seen[i] - level;
        } else {
            out_mask[i] = 0;
            any_missing = true;
        }
    }
    if (any_missing) out.set_mask(std::move(out_mask));
    return out;
}

std::vector<SweepRow> ensemble_size_sweep(std::span<const std::vector<Field2D>> ensembles,
                                          std::span<const Field2D> truths, std::span<const std::size_t> sizes,
                                          std::span<const double> levels, std::span<const Mask> masks) {
    std::vector<SweepRow> rows;
    for (std::size_t m : sizes) {
        if (m < 2) throw std::invalid_argument("ensemble_size_sweep: sizes must be >= 2");
        const ReliabilityCurve curve = reliability_impl(ensembles, truths, levels, masks, m);
        for (std::size_t l = 0; l < levels.size(); ++l) rows.push_back({m, levels[l], curve.mean[l], curve.pooled[l]});
    }
    return rows;
}

}  // namespace podiff
