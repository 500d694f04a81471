#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "groupreg/demons.hpp"
#include "groupreg/diffeo.hpp"
#include "groupreg/engine.hpp"
#include "groupreg/eval.hpp"
#include "groupreg/generative.hpp"
#include "groupreg/grid_ops.hpp"
#include "groupreg/gumbel.hpp"
#include "groupreg/io.hpp"
#include "groupreg/structrep.hpp"

namespace py = pybind11;
using namespace groupreg;

namespace {

GridSpec grid_from_shape(const std::vector<int>& shape) {
    // numpy shape is slowest-first; internal axis 0 is fastest
    std::vector<int> dims(shape.rbegin(), shape.rend());
    return GridSpec(dims);
}

std::vector<py::ssize_t> np_shape(const GridSpec& g, int channels = 0) {
    std::vector<py::ssize_t> s(g.dims.rbegin(), g.dims.rend());
    if (channels > 0) s.push_back(channels);
    return s;
}

ImageField image_from_array(const py::array_t<double, py::array::c_style |
                                                          py::array::forcecast>& arr) {
    std::vector<int> shape(arr.ndim());
    for (py::ssize_t i = 0; i < arr.ndim(); ++i)
        shape[i] = static_cast<int>(arr.shape(i));
    ImageField f;
    f.grid = grid_from_shape(shape);
    f.values.assign(arr.data(), arr.data() + arr.size());
    return f;
}

py::array image_to_array(const ImageField& f) {
    py::array_t<double> arr(np_shape(f.grid));
    std::copy(f.values.begin(), f.values.end(), arr.mutable_data());
    return arr;
}

VectorField vector_from_array(const py::array_t<double, py::array::c_style |
                                                            py::array::forcecast>& arr) {
    if (arr.ndim() < 3)
        throw std::invalid_argument("expected array of shape (..., d)");
    std::vector<int> shape(arr.ndim() - 1);
    for (py::ssize_t i = 0; i + 1 < arr.ndim(); ++i)
        shape[i] = static_cast<int>(arr.shape(i));
    const int d = static_cast<int>(arr.shape(arr.ndim() - 1));
    GridSpec grid = grid_from_shape(shape);
    if (d != grid.ndim())
        throw std::invalid_argument("last axis must match dimensionality");
    VectorField f(grid);
    // numpy component order is (slowest..fastest) spatial axes; internal
    // component a indexes the fastest-varying axis first, so reverse
    const std::size_t n = grid.voxels();
    const double* src = arr.data();
    for (std::size_t i = 0; i < n; ++i)
        for (int a = 0; a < d; ++a) f.at(i)[a] = src[i * d + (d - 1 - a)];
    return f;
}

py::array vector_to_array(const VectorField& f) {
    const int d = f.grid.ndim();
    py::array_t<double> arr(np_shape(f.grid, d));
    double* dst = arr.mutable_data();
    const std::size_t n = f.grid.voxels();
    for (std::size_t i = 0; i < n; ++i)
        for (int a = 0; a < d; ++a) dst[i * d + (d - 1 - a)] = f.at(i)[a];
    return arr;
}

CategoricalField categorical_from_array(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() < 3)
        throw std::invalid_argument("expected array of shape (..., K)");
    std::vector<int> shape(arr.ndim() - 1);
    for (py::ssize_t i = 0; i + 1 < arr.ndim(); ++i)
        shape[i] = static_cast<int>(arr.shape(i));
    const int K = static_cast<int>(arr.shape(arr.ndim() - 1));
    CategoricalField f(grid_from_shape(shape), K);
    f.probs.assign(arr.data(), arr.data() + arr.size());
    return f;
}

py::array categorical_to_array(const CategoricalField& f) {
    py::array_t<double> arr(np_shape(f.grid, f.K));
    std::copy(f.probs.begin(), f.probs.end(), arr.mutable_data());
    return arr;
}

LabelField labels_from_array(
    const py::array_t<int32_t, py::array::c_style | py::array::forcecast>& arr) {
    std::vector<int> shape(arr.ndim());
    for (py::ssize_t i = 0; i < arr.ndim(); ++i)
        shape[i] = static_cast<int>(arr.shape(i));
    LabelField f;
    f.grid = grid_from_shape(shape);
    f.labels.assign(arr.data(), arr.data() + arr.size());
    int maxl = 0;
    for (int32_t l : f.labels) maxl = std::max(maxl, static_cast<int>(l));
    f.num_classes = maxl + 1;
    return f;
}

py::array labels_to_array(const LabelField& f) {
    py::array_t<int32_t> arr(np_shape(f.grid));
    std::copy(f.labels.begin(), f.labels.end(), arr.mutable_data());
    return arr;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Groupwise multi-modal diffeomorphic registration core";

    // field algebra
    m.def("warp_image", [](const py::array_t<double>& img, const py::array_t<double>& t,
                           const std::string& mode) {
        return image_to_array(warp(image_from_array(img), vector_from_array(t),
                                   mode == "nearest" ? Interp::Nearest : Interp::Linear));
    }, py::arg("image"), py::arg("transform"), py::arg("mode") = "linear");
    m.def("warp_probs", [](const py::array_t<double>& p, const py::array_t<double>& t) {
        return categorical_to_array(
            warp(categorical_from_array(p), vector_from_array(t)));
    });
    m.def("warp_labels", [](const py::array_t<int32_t>& l, const py::array_t<double>& t) {
        return labels_to_array(warp(labels_from_array(l), vector_from_array(t)));
    });
    m.def("jacobian_determinant", [](const py::array_t<double>& t) {
        return image_to_array(jacobian_determinant(vector_from_array(t)));
    });
    m.def("exponentiate", [](const py::array_t<double>& v, int steps) {
        return vector_to_array(exponentiate(vector_from_array(v), steps));
    }, py::arg("velocity"), py::arg("steps") = -1);
    m.def("compose", [](const py::array_t<double>& a, const py::array_t<double>& b) {
        return vector_to_array(compose(vector_from_array(a), vector_from_array(b)));
    });

    // fusion
    m.def("geometric_mean", [](const std::vector<py::array_t<double>>& views) {
        std::vector<CategoricalField> fields;
        for (const auto& v : views) fields.push_back(categorical_from_array(v));
        std::vector<const CategoricalField*> ptrs;
        for (const auto& f : fields) ptrs.push_back(&f);
        return categorical_to_array(geometric_mean(ptrs));
    });
    m.def("arithmetic_mean", [](const std::vector<py::array_t<double>>& views) {
        std::vector<CategoricalField> fields;
        for (const auto& v : views) fields.push_back(categorical_from_array(v));
        std::vector<const CategoricalField*> ptrs;
        for (const auto& f : fields) ptrs.push_back(&f);
        return categorical_to_array(arithmetic_mean(ptrs));
    });
    m.def("intrinsic_distance", [](const std::vector<py::array_t<double>>& views) {
        std::vector<CategoricalField> fields;
        for (const auto& v : views) fields.push_back(categorical_from_array(v));
        std::vector<const CategoricalField*> ptrs;
        for (const auto& f : fields) ptrs.push_back(&f);
        return intrinsic_distance(geometric_mean(ptrs), ptrs).total;
    });

    // metrics
    m.def("groupwise_dice", [](const std::vector<py::array_t<int32_t>>& labels, int c) {
        std::vector<LabelField> fields;
        for (const auto& l : labels) fields.push_back(labels_from_array(l));
        std::vector<const LabelField*> ptrs;
        for (const auto& f : fields) ptrs.push_back(&f);
        return groupwise_dice(ptrs, c);
    });
    m.def("groupwise_assd", [](const std::vector<py::array_t<int32_t>>& labels, int c) {
        std::vector<LabelField> fields;
        for (const auto& l : labels) fields.push_back(labels_from_array(l));
        std::vector<const LabelField*> ptrs;
        for (const auto& f : fields) ptrs.push_back(&f);
        return groupwise_assd(ptrs, c).value;
    });
    m.def("groupwise_warping_index",
          [](const std::vector<py::array_t<double>>& gt,
             const std::vector<py::array_t<double>>& pred,
             const py::array_t<int32_t>& fg) {
              std::vector<VectorField> g, p;
              for (const auto& t : gt) g.push_back(vector_from_array(t));
              for (const auto& t : pred) p.push_back(vector_from_array(t));
              std::vector<const VectorField*> gp, pp;
              for (const auto& t : g) gp.push_back(&t);
              for (const auto& t : p) pp.push_back(&t);
              return groupwise_warping_index(gp, pp, labels_from_array(fg));
          });

    // synthesis
    m.def("random_ffd", [](const std::vector<int>& shape, double spacing, double bound,
                           uint64_t seed) {
        FfdSpec spec{spacing, bound, seed};
        return vector_to_array(random_ffd(spec, grid_from_shape(shape)));
    });

    // end-to-end registration
    m.def("register_group",
          [](const std::vector<py::array_t<double>>& images,
             const std::vector<std::string>& modalities, int levels, int K,
             int iters_per_level, uint64_t seed) {
              EngineConfig cfg;
              cfg.levels = levels;
              cfg.K = K;
              cfg.iters_per_level = iters_per_level;
              cfg.seed = seed;
              std::vector<ImageField> fields;
              for (const auto& img : images) fields.push_back(image_from_array(img));
              GroupState state = register_group(fields, modalities, cfg);
              py::dict out;
              py::list fwd, inv, tot;
              for (const auto& f : state.forward) fwd.append(vector_to_array(f));
              for (const auto& f : state.inverse) inv.append(vector_to_array(f));
              for (const auto& f : state.totals) tot.append(vector_to_array(f));
              out["forward"] = fwd;
              out["inverse"] = inv;
              out["velocity_totals"] = tot;
              out["fused"] = categorical_to_array(state.fused);
              py::list trace;
              for (const auto& t : state.trace) {
                  py::dict e;
                  e["level"] = t.level;
                  e["iteration"] = t.iteration;
                  e["objective"] = t.objective;
                  e["elbo"] = t.elbo;
                  trace.append(e);
              }
              out["trace"] = trace;
              return out;
          },
          py::arg("images"), py::arg("modalities"), py::arg("levels") = 3,
          py::arg("K") = 8, py::arg("iters_per_level") = 30, py::arg("seed") = 0);

    // gumbel machinery
    m.def("gumbel_max_sample", [](const std::vector<double>& logits, uint64_t seed) {
        return gumbel_max_sample(logits, seed);
    });
    m.def("gumbel_rao_gradient",
          [](const std::vector<double>& f_grad, const std::vector<double>& logits,
             double tau, int S, uint64_t seed) {
              GumbelRaoConfig cfg{tau, S, seed};
              auto res = gumbel_rao_gradient(f_grad, logits, cfg);
              return py::make_tuple(res.sample, res.gradient);
          },
          py::arg("f_grad"), py::arg("logits"), py::arg("tau") = 1.0, py::arg("S") = 3,
          py::arg("seed") = 0);
}
