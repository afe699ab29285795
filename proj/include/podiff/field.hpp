#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace podiff {

/// Validity map: 1 = valid, 0 = excluded from every statistic.
using Mask = std::vector<std::uint8_t>;

/// Scalar field on an nx-by-ny grid, stored row-major with x fastest
/// (value (ix, iy) lives at iy * nx + ix).
class Field2D {
public:
    Field2D() = default;
    Field2D(std::size_t nx, std::size_t ny, double fill = 0.0);
    Field2D(std::size_t nx, std::size_t ny, std::vector<double> values,
            std::optional<Mask> mask = std::nullopt);

    std::size_t nx() const noexcept { return nx_; }
    std::size_t ny() const noexcept { return ny_; }
    std::size_t size() const noexcept { return values_.size(); }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    std::vector<double>& storage() noexcept { return values_; }

    double& operator()(std::size_t ix, std::size_t iy) { return values_[iy * nx_ + ix]; }
    double operator()(std::size_t ix, std::size_t iy) const { return values_[iy * nx_ + ix]; }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    bool has_mask() const noexcept { return mask_.has_value(); }
    const std::optional<Mask>& mask() const noexcept { return mask_; }
    void set_mask(std::optional<Mask> mask);
    bool valid(std::size_t i) const { return !mask_ || (*mask_)[i] != 0; }

    bool same_grid(const Field2D& other) const noexcept {
        return nx_ == other.nx_ && ny_ == other.ny_;
    }

private:
    std::size_t nx_ = 0;
    std::size_t ny_ = 0;
    std::vector<double> values_;
    std::optional<Mask> mask_;
};

/// Low-resolution observation together with its source and the upsampled field.
struct GridPair {
    Field2D hr;
    Field2D lr;
    Field2D upsampled;
};

struct FieldStats {
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::size_t count = 0;
};

/// Mean over factor-by-factor blocks. With a mask, only valid inputs are
/// averaged and an output cell is valid when any of its inputs is.
Field2D block_average(const Field2D& hr, std::size_t factor);

/// Separable Keys cubic convolution (a = -0.5) with cell-centred sample
/// positions (align-corners = false) and edge clamping. Input must be unmasked.
Field2D bicubic_upsample(const Field2D& lr, std::size_t nx_out, std::size_t ny_out);

/// Statistics over valid entries only; throws when nothing is valid.
FieldStats masked_stats(const Field2D& f);

/// Combine an optional explicit mask with the field's own mask.
Mask effective_mask(const Field2D& f, const std::optional<Mask>& extra = std::nullopt);

}  // namespace podiff
