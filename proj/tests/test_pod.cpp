#include <doctest.h>

#include <cmath>
#include <vector>

#include "podiff/pod.hpp"

using namespace podiff;

namespace {

std::vector<Field2D> random_fields(std::uint64_t seed, std::size_t n, std::size_t nx, std::size_t ny) {
    RngStream rng(seed, "fields");
    std::vector<Field2D> out;
    for (std::size_t i = 0; i < n; ++i) out.emplace_back(nx, ny, rng.randn(nx * ny));
    return out;
}

}  // namespace

TEST_SUITE("pod") {

TEST_CASE("rank-one centred snapshots give a single mode") {
    const std::size_t nx = 4, ny = 3;
    Field2D ubar(nx, ny), w(nx, ny);
    for (std::size_t i = 0; i < ubar.size(); ++i) {
        ubar[i] = 0.1 * i;
        w[i] = std::cos(0.7 * i);
    }
    Field2D plus = ubar, minus = ubar;
    for (std::size_t i = 0; i < w.size(); ++i) {
        plus[i] += w[i];
        minus[i] -= w[i];
    }
    const std::vector<Field2D> snaps{plus, minus};
    const PodBasis b = compute_pod(snaps, 5);
    REQUIRE(b.rank() == 1);
    double norm = 0.0;
    for (double v : w.values()) norm += v * v;
    norm = std::sqrt(norm);
    const double sign = b.modes(0, 0) * w[0] > 0 ? 1.0 : -1.0;
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(std::abs(sign * b.modes(i, 0) - w[i] / norm) < 1e-14);
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(std::abs(b.mean[i] - ubar[i]) < 1e-15);
    CHECK(std::abs(b.total_variance - b.eigenvalues[0]) < 1e-15);
}

TEST_CASE("identical snapshots are rejected") {
    const std::vector<Field2D> snaps(3, Field2D(2, 2, 1.0));
    CHECK_THROWS_AS(compute_pod(snaps, 2), std::invalid_argument);
}

TEST_CASE("orthonormal modes and orthogonal residuals") {
    const auto snaps = random_fields(1, 50, 8, 8);
    const PodBasis b = compute_pod(snaps, 20);
    const auto k = static_cast<Eigen::Index>(b.rank());
    CHECK((b.modes.transpose() * b.modes - Mat::Identity(k, k)).cwiseAbs().maxCoeff() <= 1e-10);
    for (Eigen::Index i = 1; i < b.eigenvalues.size(); ++i) CHECK(b.eigenvalues[i] <= b.eigenvalues[i - 1]);

    const Field2D& f = snaps[3];
    const Field2D r = reconstruct(b, project(b, f));
    Vec resid(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) resid[i] = f[i] - r[i];
    CHECK((b.modes.transpose() * resid).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("eigenvalues match the covariance spectrum computed densely") {
    const auto snaps = random_fields(2, 12, 3, 3);
    const PodBasis b = compute_pod(snaps, 9);
    Mat x(12, 9);
    for (int j = 0; j < 12; ++j)
        for (int i = 0; i < 9; ++i) x(j, i) = snaps[j][i];
    const Mat c = x.rowwise() - x.colwise().mean();
    const Mat cov = c.transpose() * c / 12.0;
    Eigen::SelfAdjointEigenSolver<Mat> ref(cov);
    for (Eigen::Index k = 0; k < b.eigenvalues.size(); ++k)
        CHECK(std::abs(b.eigenvalues[k] - ref.eigenvalues()[8 - k]) < 1e-12);
    CHECK(std::abs(b.total_variance - cov.trace()) < 1e-12);
}

TEST_CASE("select_k examples") {
    const std::vector<double> lam{4, 3, 2, 1};
    CHECK(select_k(lam, 0.7) == 2);
    CHECK(select_k(lam, 0.95) == 4);
    CHECK(select_k(lam, 1e-12) == 1);
    CHECK_THROWS(select_k(std::vector<double>{1, 2}, 0.5));
    const auto cum = cumulative_variance(Vec::Map(lam.data(), 4), 10.0);
    CHECK(cum[1] == doctest::Approx(0.7));
    CHECK(cum[3] == doctest::Approx(1.0));
}

TEST_CASE("projection and reconstruction examples") {
    const auto snaps = random_fields(3, 30, 6, 5);
    const PodBasis b = compute_pod(snaps, 10);

    CHECK(project(b, b.mean).values.cwiseAbs().maxCoeff() < 1e-14);

    Field2D f = b.mean;
    for (std::size_t i = 0; i < f.size(); ++i) f[i] += 2.0 * b.modes(i, 0);
    const CoeffVec a = project(b, f);
    CHECK(std::abs(a.values[0] - 2.0) < 1e-12);
    CHECK(a.values.tail(a.size() - 1).cwiseAbs().maxCoeff() < 1e-12);

    CoeffVec zero{Vec::Zero(10), CoeffUnits::kPhysical};
    const Field2D m = reconstruct(b, zero);
    for (std::size_t i = 0; i < m.size(); ++i) CHECK(m[i] == b.mean[i]);

    RngStream rng(4, "proj");
    const Field2D g(6, 5, rng.randn(30));
    const CoeffVec ag = project(b, g);
    for (std::size_t k = 0; k < b.rank(); ++k) {
        double dot = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) dot += b.modes(i, k) * (g[i] - b.mean[i]);
        CHECK(std::abs(ag.values[k] - dot) < 1e-12);
    }

    // Pythagoras: |f - P f|^2 = |f - mean|^2 - |a|^2
    const Field2D rg = reconstruct(b, ag);
    double lhs = 0.0, centred = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        lhs += (g[i] - rg[i]) * (g[i] - rg[i]);
        centred += (g[i] - b.mean[i]) * (g[i] - b.mean[i]);
    }
    CHECK(std::abs(lhs - (centred - ag.values.squaredNorm())) < 1e-10);
}

TEST_CASE("standardizer conventions") {
    Mat c(2, 1);
    c << 1, 3;
    const CoeffStandardizer s = CoeffStandardizer::fit(c);
    CHECK(s.mean()[0] == 2.0);
    CHECK(s.stddev()[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    const CoeffVec z = s.standardize(CoeffVec{Vec::Constant(1, 3.0), CoeffUnits::kPhysical});
    CHECK(z.units == CoeffUnits::kStandardized);
    CHECK(z.values[0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
    const CoeffVec back = s.destandardize(z);
    CHECK(back.values[0] == doctest::Approx(3.0).epsilon(1e-15));

    Mat flat(3, 2);
    flat << 1, 5, 2, 5, 3, 5;
    const CoeffStandardizer f = CoeffStandardizer::fit(flat);
    CHECK(f.stddev()[1] == 1e-8);

    CHECK_THROWS_AS(s.destandardize(back), std::invalid_argument);
    CHECK_THROWS_AS(s.standardize(z), std::invalid_argument);
}

TEST_CASE("covariance propagation") {
    const auto snaps = random_fields(5, 20, 4, 4);
    const PodBasis b = compute_pod(snaps, 6);
    const CoeffStandardizer unit(Vec::Zero(6), Vec::Ones(6));

    const Field2D zero = propagate_covariance(b, unit, Mat::Zero(6, 6));
    for (double v : zero.values()) CHECK(v == 0.0);

    const Field2D id = propagate_covariance(b, unit, Mat::Identity(6, 6));
    for (std::size_t i = 0; i < id.size(); ++i) CHECK(std::abs(id[i] - b.modes.row(i).squaredNorm()) < 1e-14);

    // Latent samples, reconstructed, give the same pixel variance.
    RngStream rng(6, "cov");
    const CoeffStandardizer s(Vec::LinSpaced(6, -1.0, 1.0), Vec::LinSpaced(6, 0.5, 3.0));
    Mat z(40, 6);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = rng.normal();
    const Field2D analytic = propagate_covariance(b, s, sample_covariance(z));
    const Mat phys = s.destandardize_rows(z);
    std::vector<Field2D> recon;
    for (Eigen::Index m = 0; m < phys.rows(); ++m) recon.push_back(reconstruct(b, CoeffVec{phys.row(m).transpose(), CoeffUnits::kPhysical}));
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        double mean = 0.0, var = 0.0;
        for (const Field2D& r : recon) mean += r[i];
        mean /= recon.size();
        for (const Field2D& r : recon) var += (r[i] - mean) * (r[i] - mean);
        var /= recon.size() - 1.0;
        CHECK(std::abs(var - analytic[i]) < 1e-10);
    }
}

TEST_CASE("random orthonormal bases") {
    RngStream rng(7, "rand");
    const Field2D mean(3, 3);
    const PodBasis sq = random_orthonormal_basis(rng, 9, 9, mean);
    CHECK((sq.modes.transpose() * sq.modes - Mat::Identity(9, 9)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((sq.modes * sq.modes.transpose() - Mat::Identity(9, 9)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(sq.eigenvalues.size() == 0);
}

TEST_CASE("POD beats random bases on the training set") {
    const auto snaps = random_fields(8, 40, 6, 6);
    const PodBasis b = compute_pod(snaps, 8);
    const double pod = reconstruction_mse(b, snaps);
    RngStream rng(9, "ablation");
    for (int trial = 0; trial < 10; ++trial) {
        const PodBasis r = random_orthonormal_basis(rng, 36, 8, b.mean);
        CHECK(pod <= reconstruction_mse(r, snaps));
    }
}

}
