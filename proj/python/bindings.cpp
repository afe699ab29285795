#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "podiff/advdiff.hpp"
#include "podiff/config.hpp"
#include "podiff/error.hpp"
#include "podiff/field.hpp"
#include "podiff/io.hpp"
#include "podiff/pipeline.hpp"
#include "podiff/uq.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace podiff;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using MaskArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

// Fields cross the boundary as (ny, nx) arrays, x fastest as on disk.
py::array_t<double> to_numpy(const Field2D& f) {
    py::array_t<double> out({f.ny(), f.nx()});
    std::memcpy(out.mutable_data(), f.values().data(), f.size() * sizeof(double));
    return out;
}

py::object mask_to_numpy(const Field2D& f) {
    if (!f.has_mask()) return py::none();
    py::array_t<std::uint8_t> out({f.ny(), f.nx()});
    std::memcpy(out.mutable_data(), f.mask()->data(), f.size());
    return out;
}

Field2D from_numpy(const Array& a, const std::optional<MaskArray>& mask) {
    if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D array of shape (ny, nx)");
    const auto ny = static_cast<std::size_t>(a.shape(0)), nx = static_cast<std::size_t>(a.shape(1));
    std::vector<double> v(a.data(), a.data() + a.size());
    std::optional<Mask> m;
    if (mask) {
        if (mask->ndim() != 2 || mask->shape(0) != a.shape(0) || mask->shape(1) != a.shape(1)) {
            throw std::invalid_argument("mask shape does not match the field");
        }
        m = Mask(mask->data(), mask->data() + mask->size());
    }
    return Field2D(nx, ny, std::move(v), std::move(m));
}

py::dict summary_to_dict(const pipeline::EvalSummary& s) {
    py::dict methods;
    for (const auto& [tag, r] : s.methods) {
        py::dict d;
        d["rmse"] = r.report.rmse;
        d["mae"] = r.report.mae;
        d["extreme_rmse"] = r.report.extreme_rmse;
        d["extreme_mae"] = r.report.extreme_mae;
        d["members"] = r.members;
        if (r.members > 1) {
            d["crps"] = r.report.crps;
            d["mace"] = r.report.mace;
            d["levels"] = r.report.levels;
            d["coverage"] = r.report.coverage;
            d["pooled_coverage"] = r.pooled_coverage;
            d["linear_uq_max_abs_diff"] = r.linear_uq_max_abs_diff;
        }
        methods[py::str(tag)] = d;
    }
    py::dict out;
    out["cases"] = s.cases;
    out["methods"] = methods;
    return out;
}

}  // namespace

PYBIND11_MODULE(_podiff, m) {
    m.doc() = "Reduced-order probabilistic super-resolution: file formats, metrics and the pipeline.";
    m.attr("__version__") = pipeline::kToolVersion;

    static py::exception<Error> error(m, "PodiffError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object exc = py::reinterpret_borrow<py::object>(error.ptr())(e.what());
            exc.attr("code") = static_cast<int>(e.code());
            PyErr_SetObject(error.ptr(), exc.ptr());
        }
    });

    m.def("read_field", [](const fs::path& path) {
        const Field2D f = io::read_field(path);
        return py::make_tuple(to_numpy(f), mask_to_numpy(f));
    }, py::arg("path"), "Read an FLD1 file; returns (values, mask or None).");
    m.def("write_field", [](const fs::path& path, const Array& values, std::optional<MaskArray> mask) {
        io::write_field(path, from_numpy(values, mask));
    }, py::arg("path"), py::arg("values"), py::arg("mask") = py::none());

    m.def("read_stack", [](const fs::path& path) {
        py::list out;
        for (const Field2D& f : io::read_stack(path)) out.append(to_numpy(f));
        return out;
    }, py::arg("path"), "Read an FST1 stack as a list of (ny, nx) arrays.");
    m.def("write_stack", [](const fs::path& path, const std::vector<Array>& fields) {
        std::vector<Field2D> out;
        for (const Array& a : fields) out.push_back(from_numpy(a, std::nullopt));
        io::write_stack(path, out);
    }, py::arg("path"), py::arg("fields"));

    m.def("sha256_file", [](const fs::path& p) { return io::sha256_file(p); }, py::arg("path"));

    m.def("load_config", [](const fs::path& path) {
        return config_to_json(load_config(path)).dump();
    }, py::arg("path"), "Validated config with defaults filled in, as a JSON string.");

    m.def("propagate", [](const Array& u0, double vx, double vy, double kappa, std::size_t steps, double dt) {
        const Field2D f = from_numpy(u0, std::nullopt);
        AdvDiffParams p;
        p.vx = vx;
        p.vy = vy;
        p.kappa = kappa;
        p.dt = dt;
        p.nx = f.nx();
        p.ny = f.ny();
        return to_numpy(propagate(f, p, steps));
    }, py::arg("u0"), py::arg("vx"), py::arg("vy"), py::arg("kappa"), py::arg("steps"), py::arg("dt") = 0.005);

    m.def("crps_ensemble", [](std::vector<double> members, double y, bool fair) {
        return crps_ensemble(members, y, fair);
    }, py::arg("members"), py::arg("y"), py::arg("fair") = false);
    m.def("mace", [](std::vector<double> empirical, std::vector<double> levels) {
        return mace(empirical, levels);
    }, py::arg("empirical"), py::arg("levels"));
    m.def("rmse_mae", [](const Array& pred, const Array& truth) {
        const ErrorStats s = rmse_mae(from_numpy(pred, std::nullopt), from_numpy(truth, std::nullopt));
        return py::make_tuple(s.rmse, s.mae);
    }, py::arg("pred"), py::arg("truth"));

    m.def("run", [](const fs::path& config, std::optional<fs::path> out, std::optional<std::uint64_t> seed) {
        ExperimentConfig cfg = load_config(config);
        pipeline::Overrides o;
        o.out = out;
        o.seed = seed;
        pipeline::apply_overrides(cfg, o);
        pipeline::EvalSummary s;
        {
            py::gil_scoped_release release;
            pipeline::Context ctx(cfg);
            s = pipeline::cmd_run(ctx);
        }
        return summary_to_dict(s);
    }, py::arg("config"), py::arg("out") = py::none(), py::arg("seed") = py::none(),
       "Run every stage for a config file and return the evaluation summary.");
}
