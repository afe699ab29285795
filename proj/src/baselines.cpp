#include "podiff/baselines.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <utility>

#include "podiff/error.hpp"

namespace podiff {

Field2D pod_projection(const PodBasis& basis, const Field2D& x_up) {
    if (!x_up.same_grid(basis.mean)) throw std::invalid_argument("pod_projection: grid mismatch");
    return reconstruct(basis, project(basis, x_up));
}

double rbf_kernel(const RbfOptions& opt, double r) {
    switch (opt.kernel) {
        case RbfKernel::kThinPlate:
            return r > 0.0 ? r * r * std::log(r) : 0.0;
        case RbfKernel::kGaussian: {
            const double s = r / opt.length_scale;
            return std::exp(-s * s);
        }
    }
    throw std::invalid_argument("rbf_kernel: unknown kernel");
}

double RbfModel::operator()(double x, double y) const {
    double s = affine[0] + affine[1] * x + affine[2] * y;
    for (std::size_t i = 0; i < cx.size(); ++i) {
        s += weights[static_cast<Eigen::Index>(i)] * rbf_kernel(options, std::hypot(x - cx[i], y - cy[i]));
    }
    return s;
}

RbfModel rbf_fit_points(std::vector<double> x, std::vector<double> y, const std::vector<double>& values,
                        const RbfOptions& opt) {
    const std::size_t n = x.size();
    if (y.size() != n || values.size() != n) throw std::invalid_argument("rbf_fit: coordinate/value length mismatch");
    if (n < 4) throw std::invalid_argument("rbf_fit: need at least 4 centers");
    if (!(opt.ridge >= 0.0)) throw std::invalid_argument("rbf_fit: ridge must be >= 0");
    if (opt.kernel == RbfKernel::kGaussian && !(opt.length_scale > 0.0)) {
        throw std::invalid_argument("rbf_fit: Gaussian length scale must be > 0");
    }
    if (opt.ridge == 0.0) {
        std::set<std::pair<double, double>> seen;
        for (std::size_t i = 0; i < n; ++i) {
            if (!seen.emplace(x[i], y[i]).second) throw NumericalFailure("rbf_fit: singular system (duplicate centers)");
        }
    }

    const auto ni = static_cast<Eigen::Index>(n);
    Mat a(ni, ni);
    for (Eigen::Index i = 0; i < ni; ++i) {
        a(i, i) = rbf_kernel(opt, 0.0) + opt.ridge;
        for (Eigen::Index j = 0; j < i; ++j) {
            const auto ui = static_cast<std::size_t>(i), uj = static_cast<std::size_t>(j);
            a(i, j) = a(j, i) = rbf_kernel(opt, std::hypot(x[ui] - x[uj], y[ui] - y[uj]));
        }
    }
    Eigen::MatrixXd p(ni, 3);
    Vec f(ni);
    for (Eigen::Index i = 0; i < ni; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        p(i, 0) = 1.0;
        p(i, 1) = x[ui];
        p(i, 2) = y[ui];
        f[i] = values[ui];
    }

    Eigen::HouseholderQR<Eigen::MatrixXd> qr(p);
    const Eigen::Matrix3d r = qr.matrixQR().topLeftCorner(3, 3).triangularView<Eigen::Upper>();
    if (std::abs(r.diagonal().prod()) < 1e-14 * std::pow(r.norm(), 3)) {
        throw NumericalFailure("rbf_fit: centers are collinear, affine term is not determined");
    }
    const Eigen::MatrixXd q = qr.householderQ();
    const Eigen::MatrixXd q1 = q.leftCols(3);
    const Eigen::MatrixXd q2 = q.rightCols(ni - 3);

    const Eigen::MatrixXd reduced = q2.transpose() * a * q2;
    Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (reduced + reduced.transpose()));
    if (llt.info() != Eigen::Success) throw NumericalFailure("rbf_fit: singular system");
    const Vec gamma = llt.solve(q2.transpose() * f);
    if (!gamma.allFinite()) throw NumericalFailure("rbf_fit: singular system");

    RbfModel model;
    model.options = opt;
    model.weights = q2 * gamma;
    const Vec rhs = q1.transpose() * (f - a * model.weights);
    model.affine = r.triangularView<Eigen::Upper>().solve(rhs);
    model.cx = std::move(x);
    model.cy = std::move(y);
    return model;
}

RbfModel rbf_fit(const Field2D& lr, const RbfOptions& opt) {
    std::vector<double> x, y, v;
    for (std::size_t iy = 0; iy < lr.ny(); ++iy) {
        for (std::size_t ix = 0; ix < lr.nx(); ++ix) {
            if (!lr.valid(iy * lr.nx() + ix)) continue;
            x.push_back((static_cast<double>(ix) + 0.5) / static_cast<double>(lr.nx()));
            y.push_back((static_cast<double>(iy) + 0.5) / static_cast<double>(lr.ny()));
            v.push_back(lr(ix, iy));
        }
    }
    return rbf_fit_points(std::move(x), std::move(y), v, opt);
}

Field2D rbf_eval(const RbfModel& model, std::size_t nx, std::size_t ny) {
    if (nx == 0 || ny == 0) throw std::invalid_argument("rbf_eval: empty grid");
    Field2D out(nx, ny);
    for (std::size_t iy = 0; iy < ny; ++iy) {
        const double y = (static_cast<double>(iy) + 0.5) / static_cast<double>(ny);
        for (std::size_t ix = 0; ix < nx; ++ix) {
            out(ix, iy) = model((static_cast<double>(ix) + 0.5) / static_cast<double>(nx), y);
        }
    }
    return out;
}

}  // namespace podiff
