#pragma once

#include <torch/torch.h>

#include <functional>
#include <string>
#include <vector>

namespace hazemeta::gradcheck {

struct Result {
    std::string name;
    double max_rel_error = 0;
    bool passed = false;
};

/// Central finite-difference check of autograd gradients for a scalar-valued
/// function of one tensor input. 64-bit inputs expected.
inline Result check(const std::string& name,
                    const std::function<torch::Tensor(const torch::Tensor&)>& fn,
                    const torch::Tensor& input, double eps = 1e-6, double tol = 1e-4) {
    auto x = input.detach().to(torch::kFloat64).requires_grad_(true);
    auto out = fn(x);
    TORCH_CHECK(out.dim() == 0, "gradcheck: function must return a scalar");
    out.backward();
    auto analytic = x.grad().detach().clone().flatten();

    auto base = input.detach().to(torch::kFloat64).clone();
    auto flat = base.flatten();
    auto numeric = torch::zeros_like(flat);
    torch::NoGradGuard no_grad;
    for (int64_t i = 0; i < flat.numel(); ++i) {
        auto orig = flat[i].item<double>();
        flat[i] = orig + eps;
        double up = fn(base.reshape(input.sizes())).item<double>();
        flat[i] = orig - eps;
        double down = fn(base.reshape(input.sizes())).item<double>();
        flat[i] = orig;
        numeric[i] = (up - down) / (2 * eps);
    }

    Result r;
    r.name = name;
    auto denom = std::max({analytic.abs().max().item<double>(),
                           numeric.abs().max().item<double>(), 1e-8});
    r.max_rel_error = (analytic - numeric).abs().max().item<double>() / denom;
    r.passed = r.max_rel_error < tol;
    return r;
}

// The finite-difference suite run by the `gradcheck` CLI subcommand and the
// acceptance tests: distance-aware aggregation, contextual loss, L_DCR,
// SSIM loss and CR loss on small 64-bit toys.
std::vector<Result> run_suite(uint64_t seed = 7);

} // namespace hazemeta::gradcheck
