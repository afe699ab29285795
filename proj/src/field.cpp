#include "podiff/field.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace podiff {

Field2D::Field2D(std::size_t nx, std::size_t ny, double fill)
    : nx_(nx), ny_(ny), values_(nx * ny, fill) {}

Field2D::Field2D(std::size_t nx, std::size_t ny, std::vector<double> values,
                 std::optional<Mask> mask)
    : nx_(nx), ny_(ny), values_(std::move(values)) {
    if (values_.size() != nx_ * ny_) {
        throw std::invalid_argument("Field2D: value count does not match grid");
    }
    set_mask(std::move(mask));
}

void Field2D::set_mask(std::optional<Mask> mask) {
    if (mask && mask->size() != values_.size()) {
        throw std::invalid_argument("Field2D: mask size does not match grid");
    }
    mask_ = std::move(mask);
}

Mask effective_mask(const Field2D& f, const std::optional<Mask>& extra) {
    Mask m(f.size(), 1);
    if (f.mask()) m = *f.mask();
    if (extra) {
        if (extra->size() != f.size()) throw std::invalid_argument("mask size does not match grid");
        for (std::size_t i = 0; i < m.size(); ++i) m[i] = static_cast<std::uint8_t>(m[i] && (*extra)[i]);
    }
    return m;
}

Field2D block_average(const Field2D& hr, std::size_t factor) {
    if (factor == 0 || hr.nx() % factor != 0 || hr.ny() % factor != 0) {
        throw std::invalid_argument("block_average: factor must divide both grid dimensions");
    }
    const std::size_t nx = hr.nx() / factor;
    const std::size_t ny = hr.ny() / factor;
    std::vector<double> sum(nx * ny, 0.0);
    std::vector<std::size_t> count(nx * ny, 0);
    for (std::size_t iy = 0; iy < hr.ny(); ++iy) {
        for (std::size_t ix = 0; ix < hr.nx(); ++ix) {
            const std::size_t i = iy * hr.nx() + ix;
            if (!hr.valid(i)) continue;
            const std::size_t o = (iy / factor) * nx + ix / factor;
            sum[o] += hr[i];
            ++count[o];
        }
    }
    std::optional<Mask> mask;
    if (hr.has_mask()) mask = Mask(nx * ny, 0);
    for (std::size_t o = 0; o < sum.size(); ++o) {
        if (count[o] > 0) {
            sum[o] /= static_cast<double>(count[o]);
            if (mask) (*mask)[o] = 1;
        }
    }
    return Field2D(nx, ny, std::move(sum), std::move(mask));
}

namespace {

double keys_kernel(double x) {
    constexpr double a = -0.5;
    x = std::abs(x);
    if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    return 0.0;
}

struct Taps {
    std::array<std::size_t, 4> index;
    std::array<double, 4> weight;
};

std::vector<Taps> axis_taps(std::size_t n_in, std::size_t n_out) {
    std::vector<Taps> taps(n_out);
    const double ratio = static_cast<double>(n_in) / static_cast<double>(n_out);
    const auto last = static_cast<long>(n_in) - 1;
    for (std::size_t j = 0; j < n_out; ++j) {
        const double x = (static_cast<double>(j) + 0.5) * ratio - 0.5;
        const auto base = static_cast<long>(std::floor(x));
        for (int t = 0; t < 4; ++t) {
            const long m = base - 1 + t;
            taps[j].index[t] = static_cast<std::size_t>(std::clamp(m, 0L, last));
            taps[j].weight[t] = keys_kernel(x - static_cast<double>(m));
        }
    }
    return taps;
}

}  // namespace

Field2D bicubic_upsample(const Field2D& lr, std::size_t nx_out, std::size_t ny_out) {
    if (lr.size() == 0) throw std::invalid_argument("bicubic_upsample: empty input");
    if (nx_out < lr.nx() || ny_out < lr.ny()) {
        throw std::invalid_argument("bicubic_upsample: output smaller than input");
    }
    if (lr.has_mask()) {
        throw std::invalid_argument("bicubic_upsample: masked input is not interpolated");
    }
    const auto tx = axis_taps(lr.nx(), nx_out);
    const auto ty = axis_taps(lr.ny(), ny_out);

    // Interpolate along x first, then along y.
    std::vector<double> rows(nx_out * lr.ny());
    for (std::size_t iy = 0; iy < lr.ny(); ++iy) {
        for (std::size_t jx = 0; jx < nx_out; ++jx) {
            double acc = 0.0;
            for (int t = 0; t < 4; ++t) acc += tx[jx].weight[t] * lr(tx[jx].index[t], iy);
            rows[iy * nx_out + jx] = acc;
        }
    }
    Field2D out(nx_out, ny_out);
    for (std::size_t jy = 0; jy < ny_out; ++jy) {
        for (std::size_t jx = 0; jx < nx_out; ++jx) {
            double acc = 0.0;
            for (int t = 0; t < 4; ++t) acc += ty[jy].weight[t] * rows[ty[jy].index[t] * nx_out + jx];
            out(jx, jy) = acc;
        }
    }
    return out;
}

FieldStats masked_stats(const Field2D& f) {
    FieldStats s;
    s.min = std::numeric_limits<double>::infinity();
    s.max = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (!f.valid(i)) continue;
        sum += f[i];
        s.min = std::min(s.min, f[i]);
        s.max = std::max(s.max, f[i]);
        ++s.count;
    }
    if (s.count == 0) throw std::invalid_argument("masked_stats: no valid entries");
    s.mean = sum / static_cast<double>(s.count);
    return s;
}

}  // namespace podiff
