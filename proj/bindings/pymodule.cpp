// Python bindings for the main operations: exact W2, the trained distance
// surrogates, pairwise matrices and Isomap embedding.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "kenn/checkpoint.hpp"
#include "kenn/downstream.hpp"
#include "kenn/error.hpp"
#include "kenn/exact_ot.hpp"
#include "kenn/measures.hpp"
#include "kenn/models.hpp"
#include "kenn/parallel.hpp"
#include "kenn/train_eval.hpp"

namespace py = pybind11;
using namespace kenn;

namespace {

GridMeasure measure_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& img) {
    if (img.ndim() != 2) throw input_error("expected a 2-D intensity array");
    const int h = static_cast<int>(img.shape(0)), w = static_cast<int>(img.shape(1));
    std::vector<double> raw(img.data(), img.data() + static_cast<size_t>(h) * w);
    return normalize_image(raw, h, w);
}

std::vector<GridMeasure> measures_from_stack(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& imgs) {
    if (imgs.ndim() != 3) throw input_error("expected a [n, h, w] intensity array");
    const int n = static_cast<int>(imgs.shape(0));
    const int h = static_cast<int>(imgs.shape(1)), w = static_cast<int>(imgs.shape(2));
    std::vector<GridMeasure> items;
    items.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        std::vector<double> raw(imgs.data() + static_cast<int64_t>(i) * h * w,
                                imgs.data() + static_cast<int64_t>(i + 1) * h * w);
        items.push_back(normalize_image(raw, h, w));
    }
    return items;
}

py::array_t<double> matrix_to_array(const DistanceMatrix& D) {
    py::array_t<double> out({D.n, D.n});
    std::copy(D.entries.begin(), D.entries.end(), out.mutable_data());
    return out;
}

Tensor<float> measure_to_input(const GridMeasure& m) {
    Tensor<float> t = Tensor<float>::zeros({1, 1, m.height, m.width});
    for (int i = 0; i < m.size(); ++i) t.data[static_cast<size_t>(i)] = static_cast<float>(m.weights[static_cast<size_t>(i)]);
    return t;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "W2 surrogate core: exact optimal transport, distance models, embeddings";

    py::register_exception<input_error>(m, "InputError", PyExc_ValueError);
    py::register_exception<data_error>(m, "DataError", PyExc_RuntimeError);
    py::register_exception<numeric_error>(m, "NumericError", PyExc_ArithmeticError);

    py::class_<GridMeasure>(m, "GridMeasure")
        .def_readonly("height", &GridMeasure::height)
        .def_readonly("width", &GridMeasure::width)
        .def_property_readonly("weights",
                               [](const GridMeasure& g) {
                                   py::array_t<double> out({g.height, g.width});
                                   std::copy(g.weights.begin(), g.weights.end(), out.mutable_data());
                                   return out;
                               })
        .def("__repr__", [](const GridMeasure& g) {
            return "GridMeasure(" + std::to_string(g.height) + "x" + std::to_string(g.width) + ")";
        });

    py::class_<GroundCost>(m, "GroundCost")
        .def_property_readonly("size", &GroundCost::size)
        .def("at", &GroundCost::at, py::arg("i"), py::arg("j"));

    m.def("normalize_image", &measure_from_array, py::arg("image"),
          "Normalize a nonnegative 2-D intensity array to a unit-mass grid measure.");
    m.def("ground_cost", &ground_cost, py::arg("height"), py::arg("width"),
          "Squared-Euclidean ground cost between pixel centers.");

    m.def(
        "exact_w2",
        [](const GridMeasure& mu, const GridMeasure& nu) {
            const auto cost = ground_cost(mu.height, mu.width);
            return exact_w2(mu, nu, cost);
        },
        py::arg("mu"), py::arg("nu"), "Exact W2 between two grid measures (pixel units).");

    m.def(
        "exact_w2_with_plan",
        [](const GridMeasure& mu, const GridMeasure& nu) {
            const auto cost = ground_cost(mu.height, mu.width);
            const auto result = exact_w2_with_plan(mu, nu, cost);
            std::vector<std::tuple<int, int, double>> plan;
            plan.reserve(result.plan.entries.size());
            for (const auto& e : result.plan.entries) plan.emplace_back(e.src, e.dst, e.mass);
            return py::make_tuple(result.distance, plan);
        },
        py::arg("mu"), py::arg("nu"),
        "Exact W2 plus the optimal coupling as (src_pixel, dst_pixel, mass) triples.");

    m.def(
        "assignment_oracle",
        [](const std::vector<int>& src, const std::vector<int>& dst, int height, int width) {
            const auto cost = ground_cost(height, width);
            return assignment_oracle(src, dst, cost);
        },
        py::arg("src"), py::arg("dst"), py::arg("height"), py::arg("width"),
        "Independent assignment-based W2 oracle for uniform equal-size supports.");

    py::class_<Model<float>>(m, "Model")
        .def_property_readonly("kind",
                               [](const Model<float>& mod) { return to_string(mod.kind); })
        .def_property_readonly("param_count",
                               [](const Model<float>& mod) { return mod.params.total_parameters(); })
        .def_property_readonly("input_shape",
                               [](const Model<float>& mod) {
                                   return py::make_tuple(mod.config.in_h, mod.config.in_w);
                               })
        .def(
            "distance",
            [](const Model<float>& mod, const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
               const py::array_t<double, py::array::c_style | py::array::forcecast>& b) {
                const auto ma = measure_from_array(a), mb = measure_from_array(b);
                return pair_distances(mod, measure_to_input(ma), measure_to_input(mb))[0];
            },
            py::arg("image_a"), py::arg("image_b"),
            "Surrogate distance between two images (normalized internally).")
        .def(
            "pairwise",
            [](const Model<float>& mod, const py::array_t<double, py::array::c_style | py::array::forcecast>& imgs,
               int workers) {
                const auto items = measures_from_stack(imgs);
                const SurrogateBackend backend(mod);
                return matrix_to_array(pairwise_matrix(items, backend, workers));
            },
            py::arg("images"), py::arg("workers") = 1,
            "Pairwise surrogate distance matrix over a [n, h, w] image stack.")
        .def("export_weights",
             [](const Model<float>& mod) {
                 std::vector<std::tuple<int, std::string, double>> rows;
                 for (const auto& r : export_weights(mod)) rows.emplace_back(r.index, r.label, r.lambda);
                 return rows;
             })
        .def("__repr__", [](const Model<float>& mod) {
            return "Model(" + to_string(mod.kind) + ", " +
                   std::to_string(mod.params.total_parameters()) + " params)";
        });

    m.def(
        "make_model",
        [](const std::string& kind, uint64_t seed, int in_h, int in_w) {
            ModelConfig cfg;
            cfg.in_h = in_h;
            cfg.in_w = in_w;
            return make_model<float>(model_kind_from_string(kind), cfg, seed);
        },
        py::arg("kind"), py::arg("seed") = 0, py::arg("in_h") = 28, py::arg("in_w") = 28,
        "Fresh model (naive | deepkenn | odekenn) with seed-controlled initialization.");

    m.def("load_checkpoint", &load_checkpoint, py::arg("path"));
    m.def("save_checkpoint", &save_checkpoint, py::arg("model"), py::arg("path"));

    m.def(
        "pairwise_exact",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& imgs, int workers) {
            const auto items = measures_from_stack(imgs);
            const ExactBackend backend;
            return matrix_to_array(pairwise_matrix(items, backend, workers));
        },
        py::arg("images"), py::arg("workers") = 1,
        "Exact pairwise W2 matrix over a [n, h, w] image stack.");

    m.def(
        "isomap_embed",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& matrix, int k_neighbors,
           int dim) {
            if (matrix.ndim() != 2 || matrix.shape(0) != matrix.shape(1))
                throw input_error("expected a square distance matrix");
            DistanceMatrix D;
            D.n = static_cast<int>(matrix.shape(0));
            D.entries.assign(matrix.data(), matrix.data() + static_cast<size_t>(D.n) * D.n);
            const auto result = isomap_embed(D, k_neighbors, dim);
            py::array_t<double> out({result.n, result.dim});
            std::copy(result.coords.begin(), result.coords.end(), out.mutable_data());
            return out;
        },
        py::arg("matrix"), py::arg("k_neighbors"), py::arg("dim"),
        "Isomap embedding (kNN geodesics + classical MDS) of a distance matrix.");

    m.attr("__version__") = "0.1.0";
}
