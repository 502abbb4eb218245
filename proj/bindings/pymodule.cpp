#include <pybind11/pybind11.h>
#include <pybind11/numpy.h>
#include <pybind11/stl.h>

#include <torch/torch.h>

#include "hazemeta/aggregate.hpp"
#include "hazemeta/datagen.hpp"
#include "hazemeta/dcr.hpp"
#include "hazemeta/evaluate.hpp"
#include "hazemeta/gradcheck.hpp"
#include "hazemeta/losses.hpp"
#include "hazemeta/trainer.hpp"

namespace py = pybind11;
using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

namespace {

torch::Tensor to_tensor(const FloatArray& a) {
    std::vector<int64_t> shape(a.ndim());
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[i] = a.shape(i);
    return torch::from_blob(const_cast<float*>(a.data()), shape, torch::kFloat32).clone();
}

FloatArray to_array(const torch::Tensor& t) {
    auto c = t.detach().to(torch::kFloat32).contiguous();
    std::vector<py::ssize_t> shape(c.sizes().begin(), c.sizes().end());
    FloatArray out(shape);
    std::memcpy(out.mutable_data(), c.data_ptr<float>(), c.numel() * sizeof(float));
    return out;
}

hazemeta::aggregate::DistanceReduction parse_reduction(const std::string& s) {
    if (s == "mean") return hazemeta::aggregate::DistanceReduction::Mean;
    if (s == "sum") return hazemeta::aggregate::DistanceReduction::Sum;
    throw py::value_error("reduction must be 'mean' or 'sum'");
}

} // namespace

using namespace hazemeta;

PYBIND11_MODULE(_core, m) {
    m.doc() = "Meta-learned domain-generalizing dehazer: core operations";

    m.def(
        "transmission_map",
        [](const FloatArray& depth, double beta) {
            return to_array(datagen::transmission_map(to_tensor(depth), beta));
        },
        py::arg("depth"), py::arg("beta"));

    m.def(
        "synthesize_hazy",
        [](const FloatArray& clear, const FloatArray& depth, double beta, double a) {
            return to_array(datagen::synthesize_hazy(to_tensor(clear), to_tensor(depth), beta, a));
        },
        py::arg("clear"), py::arg("depth"), py::arg("beta"), py::arg("atmospheric_light"));

    m.def(
        "invert_hazy",
        [](const FloatArray& hazy, const FloatArray& depth, double beta, double a) {
            return to_array(datagen::invert_hazy(to_tensor(hazy), to_tensor(depth), beta, a));
        },
        py::arg("hazy"), py::arg("depth"), py::arg("beta"), py::arg("atmospheric_light"));

    m.def(
        "average_aggregate",
        [](const FloatArray& prelims) {
            auto p = aggregate::average_aggregate(to_tensor(prelims));
            return py::make_tuple(to_array(p.features), to_array(p.source_weights));
        },
        py::arg("prelims"), "Mean over the leading K dimension; returns (features, weights).");

    m.def(
        "distance_aware_aggregate",
        [](const FloatArray& prelims, const std::string& reduction) {
            auto p = aggregate::distance_aware_aggregate(to_tensor(prelims),
                                                         parse_reduction(reduction));
            return py::make_tuple(to_array(p.features), to_array(p.source_weights));
        },
        py::arg("prelims"), py::arg("reduction") = "mean",
        "Softmax(-distance) aggregation over the leading K dimension.");

    m.def(
        "pairwise_mean_distance",
        [](const FloatArray& prelims, const std::string& reduction) {
            return to_array(
                aggregate::pairwise_mean_distance(to_tensor(prelims), parse_reduction(reduction)));
        },
        py::arg("prelims"), py::arg("reduction") = "mean");

    m.def(
        "contextual_loss",
        [](const FloatArray& a, const FloatArray& b, double bandwidth, double epsilon,
           bool normalized) {
            dcr::ContextualOptions opts{bandwidth, epsilon, normalized};
            return dcr::contextual_loss(to_tensor(a), to_tensor(b), opts).item<double>();
        },
        py::arg("phi_a"), py::arg("phi_b"), py::arg("bandwidth") = 0.5,
        py::arg("epsilon") = 1e-5, py::arg("normalized") = true);

    m.def(
        "dcr_loss",
        [](int64_t anchor, int64_t positive, const std::vector<int64_t>& negatives,
           const std::vector<FloatArray>& params, double sigma, double bandwidth) {
            dcr::ContrastSelection sel{anchor, positive, negatives};
            dcr::DcrOptions opts;
            opts.sigma = sigma;
            opts.contextual.bandwidth = bandwidth;
            std::vector<torch::Tensor> ts;
            for (const auto& p : params) ts.push_back(to_tensor(p));
            return dcr::dcr_loss(sel, ts, opts).item<double>();
        },
        py::arg("anchor"), py::arg("positive"), py::arg("negatives"), py::arg("params"),
        py::arg("sigma") = 1e-7, py::arg("bandwidth") = 0.5);

    m.def(
        "pixel_loss",
        [](const FloatArray& preds, const FloatArray& targets) {
            return losses::pixel_loss(to_tensor(preds), to_tensor(targets)).item<double>();
        },
        py::arg("preds"), py::arg("targets"));

    m.def(
        "ssim_loss",
        [](const FloatArray& preds, const FloatArray& targets) {
            return losses::ssim_loss(to_tensor(preds), to_tensor(targets)).item<double>();
        },
        py::arg("preds"), py::arg("targets"));

    m.def(
        "ce_loss",
        [](const FloatArray& probs, const std::vector<int64_t>& labels) {
            auto l = torch::tensor(labels, torch::kLong);
            return losses::ce_loss(to_tensor(probs), l).item<double>();
        },
        py::arg("probs"), py::arg("labels"));

    m.def(
        "psnr",
        [](const FloatArray& a, const FloatArray& b) {
            return evaluate::psnr(to_tensor(a), to_tensor(b));
        },
        py::arg("a"), py::arg("b"));

    m.def(
        "ssim_metric",
        [](const FloatArray& a, const FloatArray& b) {
            return evaluate::ssim_metric(to_tensor(a), to_tensor(b));
        },
        py::arg("a"), py::arg("b"));

    m.def(
        "dark_channel_mean",
        [](const FloatArray& img, int64_t patch) {
            return evaluate::dark_channel_mean(to_tensor(img), patch);
        },
        py::arg("img"), py::arg("patch") = 15);

    m.def("run_gradient_checks", [] {
        std::vector<gradcheck::Result> results;
        {
            py::gil_scoped_release release;
            results = gradcheck::run_suite();
        }
        py::list out;
        for (const auto& r : results) {
            out.append(py::make_tuple(r.name, r.max_rel_error, r.passed));
        }
        return out;
    });

    py::class_<trainer::Session>(m, "Session")
        .def(py::init([](const std::string& checkpoint) {
                 return trainer::Session(std::filesystem::path(checkpoint));
             }),
             py::arg("checkpoint"))
        .def(
            "infer",
            [](const trainer::Session& self, const FloatArray& hazy,
               const std::vector<FloatArray>& context) {
                std::vector<torch::Tensor> ctx;
                for (const auto& c : context) ctx.push_back(to_tensor(c));
                return to_array(self.infer(to_tensor(hazy), ctx));
            },
            py::arg("hazy"), py::arg("context") = std::vector<FloatArray>{});
}
