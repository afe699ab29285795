#include "podiff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "podiff/error.hpp"

namespace podiff {

namespace {

void require_finite(const Mat& a, const char* what) {
    if (!a.allFinite()) {
        throw std::invalid_argument(std::string(what) + ": non-finite entry");
    }
}

}  // namespace

EighResult jacobi_eigh(const Mat& input) {
    const auto n = static_cast<std::size_t>(input.rows());
    if (n == 0 || input.cols() != input.rows()) {
        throw std::invalid_argument("jacobi_eigh: matrix must be square and non-empty");
    }
    require_finite(input, "jacobi_eigh");
    const double scale = input.cwiseAbs().maxCoeff();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (std::abs(input(i, j) - input(j, i)) > 1e-12 * scale) {
                throw std::invalid_argument("jacobi_eigh: matrix is not symmetric");
            }
        }
    }

    std::vector<double> a(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            a[i * n + j] = 0.5 * (input(i, j) + input(j, i));
        }
    }
    // Row k of vt holds eigenvector k, so rotations touch contiguous memory.
    std::vector<double> vt(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) vt[i * n + i] = 1.0;

    const double frob = input.norm();
    const double tol = 1e-14 * frob;
    constexpr int kMaxSweeps = 100;

    auto off_norm = [&] {
        double s = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) s += a[p * n + q] * a[p * n + q];
        }
        return std::sqrt(2.0 * s);
    };

    bool converged = frob == 0.0 || off_norm() <= tol;
    for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (apq == 0.0) continue;
                const double app = a[p * n + p];
                const double aqq = a[q * n + q];
                const double theta = (aqq - app) / (2.0 * apq);
                double t;
                if (std::abs(theta) > 1e150) {
                    t = 0.5 / theta;
                } else {
                    t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                }
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                double* row_p = &a[p * n];
                double* row_q = &a[q * n];
                for (std::size_t k = 0; k < n; ++k) {
                    if (k == p || k == q) continue;
                    const double akp = row_p[k];
                    const double akq = row_q[k];
                    const double nkp = c * akp - s * akq;
                    const double nkq = s * akp + c * akq;
                    row_p[k] = nkp;
                    row_q[k] = nkq;
                    a[k * n + p] = nkp;
                    a[k * n + q] = nkq;
                }
                row_p[p] = app - t * apq;
                row_q[q] = aqq + t * apq;
                row_p[q] = 0.0;
                row_q[p] = 0.0;

                double* vp = &vt[p * n];
                double* vq = &vt[q * n];
                for (std::size_t k = 0; k < n; ++k) {
                    const double x = vp[k];
                    const double y = vq[k];
                    vp[k] = c * x - s * y;
                    vq[k] = s * x + c * y;
                }
            }
        }
        converged = off_norm() <= tol;
    }
    if (!converged) {
        throw NumericalFailure("jacobi_eigh: no convergence within 100 sweeps");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return a[i * n + i] > a[j * n + j]; });

    EighResult out;
    out.values.resize(static_cast<Eigen::Index>(n));
    out.vectors.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t col = 0; col < n; ++col) {
        const std::size_t src = order[col];
        out.values[static_cast<Eigen::Index>(col)] = a[src * n + src];
        const double* v = &vt[src * n];
        std::size_t arg = 0;
        for (std::size_t k = 1; k < n; ++k) {
            if (std::abs(v[k]) > std::abs(v[arg])) arg = k;
        }
        const double sign = v[arg] < 0 ? -1.0 : 1.0;
        for (std::size_t k = 0; k < n; ++k) {
            out.vectors(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(col)) = sign * v[k];
        }
    }
    return out;
}

Mat qr_q(const Mat& a) {
    const Eigen::Index d = a.rows();
    const Eigen::Index k = a.cols();
    if (k == 0 || d < k) {
        throw std::invalid_argument("qr_q: need rows >= cols >= 1");
    }
    require_finite(a, "qr_q");
    std::vector<Vec> q;
    q.reserve(static_cast<std::size_t>(k));
    for (Eigen::Index j = 0; j < k; ++j) {
        Vec v = a.col(j);
        const double original = v.norm();
        // Two Gram-Schmidt passes keep Q^T Q = I to working precision.
        for (int pass = 0; pass < 2; ++pass) {
            for (const Vec& prev : q) v -= prev.dot(v) * prev;
        }
        const double norm = v.norm();
        if (original == 0.0 || norm < 1e-12 * original) {
            throw std::invalid_argument("qr_q: rank-deficient input at column " + std::to_string(j));
        }
        q.push_back(v / norm);
    }
    Mat out(d, k);
    for (Eigen::Index j = 0; j < k; ++j) out.col(j) = q[static_cast<std::size_t>(j)];
    return out;
}

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

namespace {

void fft1d(std::vector<Complex>& x, bool inverse) {
    const std::size_t n = x.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(x[i], x[j]);
    }
    const double sign = inverse ? 1.0 : -1.0;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        std::vector<Complex> tw(half);
        for (std::size_t k = 0; k < half; ++k) {
            tw[k] = std::polar(1.0, sign * 2.0 * std::numbers::pi * static_cast<double>(k) /
                                        static_cast<double>(len));
        }
        for (std::size_t start = 0; start < n; start += len) {
            for (std::size_t k = 0; k < half; ++k) {
                const Complex u = x[start + k];
                const Complex v = x[start + k + half] * tw[k];
                x[start + k] = u + v;
                x[start + k + half] = u - v;
            }
        }
    }
}

ComplexGrid transform(ComplexGrid g, bool inverse) {
    if (!is_power_of_two(g.nx) || !is_power_of_two(g.ny)) {
        throw std::invalid_argument("fft2: grid dimensions must be powers of two");
    }
    std::vector<Complex> buf(g.nx);
    for (std::size_t iy = 0; iy < g.ny; ++iy) {
        std::copy_n(g.data.begin() + static_cast<std::ptrdiff_t>(iy * g.nx), g.nx, buf.begin());
        fft1d(buf, inverse);
        std::copy(buf.begin(), buf.end(), g.data.begin() + static_cast<std::ptrdiff_t>(iy * g.nx));
    }
    buf.resize(g.ny);
    for (std::size_t ix = 0; ix < g.nx; ++ix) {
        for (std::size_t iy = 0; iy < g.ny; ++iy) buf[iy] = g(ix, iy);
        fft1d(buf, inverse);
        for (std::size_t iy = 0; iy < g.ny; ++iy) g(ix, iy) = buf[iy];
    }
    if (inverse) {
        const double norm = 1.0 / static_cast<double>(g.nx * g.ny);
        for (auto& v : g.data) v *= norm;
    }
    return g;
}

}  // namespace

ComplexGrid fft2(std::span<const double> values, std::size_t nx, std::size_t ny) {
    if (values.size() != nx * ny) {
        throw std::invalid_argument("fft2: value count does not match grid");
    }
    ComplexGrid g(nx, ny);
    std::copy(values.begin(), values.end(), g.data.begin());
    return transform(std::move(g), false);
}

ComplexGrid fft2(const ComplexGrid& grid) { return transform(grid, false); }

ComplexGrid ifft2(const ComplexGrid& spectrum) { return transform(spectrum, true); }

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

RngStream::RngStream(std::uint64_t seed, std::string id)
    : seed_(seed),
      id_(std::move(id)),
      key_(splitmix64(seed ^ fnv1a64(id_))),
      engine_(key_) {}

RngStream RngStream::child(std::string_view label) const {
    return RngStream(seed_, id_ + "/" + std::string(label));
}

std::uint64_t RngStream::next_u64() { return engine_(); }

double RngStream::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double RngStream::uniform(double lo, double hi) {
    if (!(lo < hi)) throw std::invalid_argument("uniform: need lo < hi");
    return lo + (hi - lo) * uniform();
}

double RngStream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(phi);
    has_spare_ = true;
    return r * std::cos(phi);
}

std::size_t RngStream::index(std::size_t n) {
    if (n == 0) throw std::invalid_argument("index: empty range");
    const std::uint64_t range = n;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % range;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % range);
}

std::vector<double> RngStream::randn(std::size_t n) {
    std::vector<double> out(n);
    randn(out);
    return out;
}

void RngStream::randn(std::span<double> out) {
    for (double& v : out) v = normal();
}

std::vector<double> RngStream::rand_uniform(double lo, double hi, std::size_t n) {
    if (!(lo < hi)) throw std::invalid_argument("rand_uniform: need lo < hi");
    std::vector<double> out(n);
    for (double& v : out) v = lo + (hi - lo) * uniform();
    return out;
}

}  // namespace podiff
