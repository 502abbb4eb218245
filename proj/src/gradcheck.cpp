#include "hazemeta/gradcheck.hpp"

#include "hazemeta/aggregate.hpp"
#include "hazemeta/dcr.hpp"
#include "hazemeta/losses.hpp"

namespace hazemeta::gradcheck {

std::vector<Result> run_suite(uint64_t seed) {
    auto gen = at::detail::createCPUGenerator(seed);
    auto opts = torch::TensorOptions().dtype(torch::kFloat64);
    auto randn = [&](std::vector<int64_t> shape) {
        return torch::randn(shape, gen, opts);
    };

    std::vector<Result> results;

    results.push_back(check("distance_aware_aggregate",
                            [](const torch::Tensor& x) {
                                auto tp = aggregate::distance_aware_aggregate(x);
                                return (tp.features * tp.features).sum();
                            },
                            randn({3, 4, 3, 3})));

    auto phi_b = randn({4, 3, 3});
    results.push_back(check("contextual_loss",
                            [phi_b](const torch::Tensor& x) {
                                return dcr::contextual_loss(x, phi_b);
                            },
                            randn({4, 3, 3})));

    auto pos = randn({4, 3, 3});
    auto neg = randn({4, 3, 3});
    results.push_back(check("dcr_loss",
                            [pos, neg](const torch::Tensor& x) {
                                dcr::ContrastSelection sel;
                                sel.anchor_index = 0;
                                sel.positive_index = 1;
                                sel.negative_indices = {2};
                                return dcr::dcr_loss(sel, {x, pos, neg});
                            },
                            randn({4, 3, 3})));

    auto ssim_target = torch::rand({1, 16, 16}, gen, opts);
    results.push_back(check("ssim_loss",
                            [ssim_target](const torch::Tensor& x) {
                                return losses::ssim_loss(x, ssim_target);
                            },
                            torch::rand({1, 16, 16}, gen, opts),
                            /*eps=*/1e-5));

    auto cr_target = torch::rand({3, 16, 16}, gen, opts);
    auto cr_hazy = torch::rand({3, 16, 16}, gen, opts);
    losses::FeatureExtractor extractor;
    extractor->to(torch::kFloat64);
    results.push_back(check("cr_loss",
                            [&](const torch::Tensor& x) {
                                return losses::cr_loss(x, cr_target, cr_hazy, extractor);
                            },
                            torch::rand({3, 16, 16}, gen, opts),
                            /*eps=*/1e-5));

    return results;
}

} // namespace hazemeta::gradcheck
