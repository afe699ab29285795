#include <doctest.h>

#include <cmath>
#include <vector>

#include "podiff/baselines.hpp"
#include "podiff/error.hpp"

using namespace podiff;

namespace {

Field2D lr_field(std::size_t n, double (*f)(double, double)) {
    Field2D out(n, n);
    for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) out(x, y) = f((x + 0.5) / n, (y + 0.5) / n);
    return out;
}

double ramp(double x, double y) { return 0.3 + 1.5 * x - 0.7 * y; }
double bump(double x, double y) { return std::sin(6.0 * x) * std::cos(4.0 * y); }

}  // namespace

TEST_SUITE("baselines") {

TEST_CASE("POD projection fixes in-span fields and is idempotent") {
    RngStream rng(1, "proj");
    const PodBasis b = random_orthonormal_basis(rng, 25, 4, Field2D(5, 5, 0.5));
    Field2D x = b.mean;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += b.modes(i, 0);
    const Field2D p = pod_projection(b, x);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(p[i] - x[i]) < 1e-14);

    const Field2D g(5, 5, rng.randn(25));
    const Field2D pg = pod_projection(b, g);
    const Field2D ppg = pod_projection(b, pg);
    Vec resid(25);
    for (std::size_t i = 0; i < 25; ++i) {
        CHECK(std::abs(ppg[i] - pg[i]) < 1e-13);
        resid[i] = g[i] - pg[i];
    }
    CHECK((b.modes.transpose() * resid).cwiseAbs().maxCoeff() < 1e-13);
    CHECK_THROWS_AS(pod_projection(b, Field2D(4, 4)), std::invalid_argument);
}

TEST_CASE("thin-plate kernel values") {
    const RbfOptions tps;
    CHECK(rbf_kernel(tps, 0.0) == 0.0);
    CHECK(rbf_kernel(tps, 1.0) == 0.0);
    CHECK(rbf_kernel(tps, 2.0) == doctest::Approx(4.0 * std::log(2.0)));
    RbfOptions g;
    g.kernel = RbfKernel::kGaussian;
    g.length_scale = 0.5;
    CHECK(rbf_kernel(g, 0.5) == doctest::Approx(std::exp(-1.0)));
}

TEST_CASE("RBF reproduces constants and linear ramps") {
    const Field2D c(8, 8, 2.25);
    const Field2D up = rbf_eval(rbf_fit(c), 32, 32);
    for (double v : up.values()) CHECK(std::abs(v - 2.25) <= 1e-8);

    const Field2D lr = lr_field(8, ramp);
    const Field2D hr = rbf_eval(rbf_fit(lr), 32, 32);
    for (std::size_t y = 0; y < 32; ++y)
        for (std::size_t x = 0; x < 32; ++x) CHECK(std::abs(hr(x, y) - ramp((x + 0.5) / 32, (y + 0.5) / 32)) <= 1e-8);
}

TEST_CASE("RBF interpolates at the centers and satisfies the side conditions") {
    for (RbfKernel kern : {RbfKernel::kThinPlate, RbfKernel::kGaussian}) {
        RbfOptions opt;
        opt.kernel = kern;
        const Field2D lr = lr_field(10, bump);
        const RbfModel m = rbf_fit(lr, opt);
        CHECK(m.centers() == 100);
        double scale = 0.0, resid = 0.0;
        for (std::size_t y = 0; y < 10; ++y) {
            for (std::size_t x = 0; x < 10; ++x) {
                scale = std::max(scale, std::abs(lr(x, y)));
                resid = std::max(resid, std::abs(m((x + 0.5) / 10, (y + 0.5) / 10) - lr(x, y)));
            }
        }
        CHECK(resid <= 1e-6 * scale);
        double s0 = 0.0, sx = 0.0, sy = 0.0;
        for (std::size_t i = 0; i < m.centers(); ++i) {
            s0 += m.weights[i];
            sx += m.weights[i] * m.cx[i];
            sy += m.weights[i] * m.cy[i];
        }
        const double wmax = m.weights.cwiseAbs().maxCoeff();
        CHECK(std::abs(s0) <= 1e-10 * wmax * 100);
        CHECK(std::abs(sx) <= 1e-10 * wmax * 100);
        CHECK(std::abs(sy) <= 1e-10 * wmax * 100);
    }
}

TEST_CASE("RBF against a dense saddle-point solve") {
    RngStream rng(2, "pts");
    const std::size_t n = 30;
    const std::vector<double> x = rng.rand_uniform(0.0, 1.0, n), y = rng.rand_uniform(0.0, 1.0, n);
    const std::vector<double> v = rng.randn(n);
    RbfOptions opt;
    const RbfModel m = rbf_fit_points(x, y, v, opt);

    Mat a = Mat::Zero(n + 3, n + 3);
    Vec rhs = Vec::Zero(n + 3);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) a(i, j) = rbf_kernel(opt, std::hypot(x[i] - x[j], y[i] - y[j]));
        a(i, i) += opt.ridge;
        a(i, n) = a(n, i) = 1.0;
        a(i, n + 1) = a(n + 1, i) = x[i];
        a(i, n + 2) = a(n + 2, i) = y[i];
        rhs[i] = v[i];
    }
    const Vec sol = a.fullPivLu().solve(rhs);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(sol[i] - m.weights[i]) < 1e-6 * (1.0 + std::abs(sol[i])));
    for (int j = 0; j < 3; ++j) CHECK(std::abs(sol[n + j] - m.affine[j]) < 1e-6 * (1.0 + std::abs(sol[n + j])));
}

TEST_CASE("RBF singular systems") {
    RbfOptions exact;
    exact.ridge = 0.0;
    const std::vector<double> x{0.1, 0.5, 0.9, 0.5, 0.1}, y{0.1, 0.2, 0.8, 0.2, 0.7}, v{1, 2, 3, 4, 5};
    CHECK_THROWS_AS(rbf_fit_points(x, y, v, exact), NumericalFailure);
    const std::vector<double> cx{0.1, 0.2, 0.3, 0.4}, cy{0.1, 0.2, 0.3, 0.4};
    CHECK_THROWS_AS(rbf_fit_points(cx, cy, std::vector<double>{1, 2, 3, 4}), NumericalFailure);
    CHECK_THROWS_AS(rbf_fit_points({0.1, 0.2}, {0.1, 0.3}, std::vector<double>{1, 2}), std::invalid_argument);
}

TEST_CASE("RBF skips masked cells") {
    Field2D lr = lr_field(8, ramp);
    Mask mask(64, 1);
    mask[10] = mask[33] = 0;
    lr[10] = lr[33] = 1e6;
    lr.set_mask(mask);
    const RbfModel m = rbf_fit(lr);
    CHECK(m.centers() == 62);
    const Field2D hr = rbf_eval(m, 16, 16);
    for (std::size_t y = 0; y < 16; ++y)
        for (std::size_t x = 0; x < 16; ++x) CHECK(std::abs(hr(x, y) - ramp((x + 0.5) / 16, (y + 0.5) / 16)) <= 1e-8);
}

}
