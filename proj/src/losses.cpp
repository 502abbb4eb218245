#include "hazemeta/losses.hpp"

#include <sstream>

#include "hazemeta/errors.hpp"

namespace hazemeta::losses {

namespace F = torch::nn::functional;

torch::Tensor pixel_loss(const torch::Tensor& preds, const torch::Tensor& targets,
                         PixelReduction reduction) {
    TORCH_CHECK(preds.sizes() == targets.sizes(), "pixel_loss: shape mismatch");
    auto x = preds.dim() == 3 ? preds.unsqueeze(0) : preds;
    auto y = targets.dim() == 3 ? targets.unsqueeze(0) : targets;
    auto per_sample = (x - y).abs().flatten(1);
    auto reduced = reduction == PixelReduction::Mean ? per_sample.mean(1) : per_sample.sum(1);
    return reduced.mean();
}

namespace {

torch::Tensor gaussian_window(int64_t size, double sigma, const torch::TensorOptions& opts) {
    auto coords = torch::arange(size, opts) - static_cast<double>(size - 1) / 2.0;
    auto g = torch::exp(-coords.pow(2) / (2.0 * sigma * sigma));
    g = g / g.sum();
    return g.outer(g);
}

// Per-sample mean SSIM map over valid windows; NxCxHxW inputs.
torch::Tensor ssim_per_sample(const torch::Tensor& a, const torch::Tensor& b) {
    TORCH_CHECK(a.sizes() == b.sizes(), "ssim: shape mismatch");
    TORCH_CHECK(a.size(2) >= 11 && a.size(3) >= 11, "ssim: images must be at least 11x11");
    const double c1 = 0.01 * 0.01;
    const double c2 = 0.03 * 0.03;
    auto c = a.size(1);
    auto win = gaussian_window(11, 1.5, a.options()).expand({c, 1, 11, 11});
    auto conv = [&](const torch::Tensor& t) {
        return F::conv2d(t, win, F::Conv2dFuncOptions().groups(c));
    };
    auto mu_a = conv(a);
    auto mu_b = conv(b);
    auto mu_aa = mu_a * mu_a;
    auto mu_bb = mu_b * mu_b;
    auto mu_ab = mu_a * mu_b;
    auto sigma_aa = conv(a * a) - mu_aa;
    auto sigma_bb = conv(b * b) - mu_bb;
    auto sigma_ab = conv(a * b) - mu_ab;
    auto ssim_map = ((2 * mu_ab + c1) * (2 * sigma_ab + c2)) /
                    ((mu_aa + mu_bb + c1) * (sigma_aa + sigma_bb + c2));
    return ssim_map.flatten(1).mean(1);
}

torch::Tensor as_batch(const torch::Tensor& t) { return t.dim() == 3 ? t.unsqueeze(0) : t; }

} // namespace

torch::Tensor ssim_index(const torch::Tensor& a, const torch::Tensor& b) {
    return ssim_per_sample(as_batch(a), as_batch(b)).mean();
}

torch::Tensor ssim_loss(const torch::Tensor& preds, const torch::Tensor& targets) {
    return (1.0 - ssim_per_sample(as_batch(preds), as_batch(targets))).mean();
}

FeatureExtractorImpl::FeatureExtractorImpl(uint64_t seed) {
    auto gen = at::detail::createCPUGenerator(seed);
    const int64_t chans[6] = {3, 16, 24, 32, 48, 64};
    for (int s = 0; s < 5; ++s) {
        auto conv = torch::nn::Conv2d(
            torch::nn::Conv2dOptions(chans[s], chans[s + 1], 3).stride(2).padding(1));
        {
            torch::NoGradGuard ng;
            // Orthogonal-ish random init keeps level responses well scaled.
            auto w = torch::randn(conv->weight.sizes(), gen) /
                     std::sqrt(static_cast<double>(chans[s] * 9));
            conv->weight.copy_(w);
            conv->bias.zero_();
        }
        conv->weight.set_requires_grad(false);
        conv->bias.set_requires_grad(false);
        stages.push_back(register_module("stage" + std::to_string(s), conv));
    }
}

const std::vector<double>& FeatureExtractorImpl::level_weights() {
    static const std::vector<double> w = {1.0 / 32, 1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0};
    return w;
}

std::vector<torch::Tensor> FeatureExtractorImpl::forward(const torch::Tensor& x) {
    std::vector<torch::Tensor> levels;
    auto h = x.dim() == 3 ? x.unsqueeze(0) : x;
    for (auto& stage : stages) {
        h = torch::leaky_relu(stage(h), 0.2);
        levels.push_back(h);
    }
    return levels;
}

torch::Tensor cr_loss(const torch::Tensor& preds, const torch::Tensor& targets,
                      const torch::Tensor& hazys, FeatureExtractor& extractor, double eps) {
    auto yhat = as_batch(preds);
    auto y = as_batch(targets);
    auto x = as_batch(hazys);
    TORCH_CHECK(yhat.sizes() == y.sizes() && yhat.sizes() == x.sizes(), "cr_loss: shape mismatch");
    auto v_yhat = extractor->forward(yhat);
    std::vector<torch::Tensor> v_y, v_x;
    {
        torch::NoGradGuard ng;
        v_y = extractor->forward(y);
        v_x = extractor->forward(x);
    }
    const auto& alpha = FeatureExtractorImpl::level_weights();
    auto loss = torch::zeros({yhat.size(0)}, yhat.options());
    for (size_t s = 0; s < v_yhat.size(); ++s) {
        auto num = (v_y[s] - v_yhat[s]).abs().flatten(1).mean(1);
        auto den = (v_x[s] - v_yhat[s]).abs().flatten(1).mean(1) + eps;
        loss = loss + alpha[s] * num / den;
    }
    return loss.mean();
}

torch::Tensor ce_loss(const torch::Tensor& probs, const torch::Tensor& labels) {
    TORCH_CHECK(probs.dim() == 2, "ce_loss: expected NxI probabilities");
    TORCH_CHECK(labels.min().item<int64_t>() >= 0 &&
                    labels.max().item<int64_t>() < probs.size(1),
                "ce_loss: label out of range");
    auto picked = probs.gather(1, labels.view({-1, 1})).squeeze(1);
    return -torch::log(picked.clamp_min(1e-12)).mean();
}

TotalLoss total_loss(const torch::Tensor& pixel, const torch::Tensor& ssim,
                     const torch::Tensor& cr, const torch::Tensor& ce, const torch::Tensor& dcr,
                     const LossWeights& weights) {
    auto snapshot = [&]() {
        std::ostringstream os;
        os << " [pixel=" << pixel.item<double>() << " ssim=" << ssim.item<double>()
           << " cr=" << cr.item<double>() << " ce=" << ce.item<double>()
           << " dcr=" << dcr.item<double>() << "]";
        return os.str();
    };
    auto check = [&](const torch::Tensor& t, const char* name) {
        if (!t.isfinite().all().item<bool>()) {
            throw NumericError(std::string("total_loss: non-finite component '") + name + "'" +
                               snapshot());
        }
    };
    check(pixel, "pixel");
    check(ssim, "ssim");
    check(cr, "cr");
    check(ce, "ce");
    check(dcr, "dcr");
    TotalLoss out;
    out.value = pixel + weights.lambda1 * ssim + weights.lambda2 * cr + weights.lambda3 * ce +
                weights.lambda4 * dcr;
    out.breakdown = {pixel.item<double>(), ssim.item<double>(), cr.item<double>(),
                     ce.item<double>(),    dcr.item<double>(),  out.value.item<double>()};
    return out;
}

} // namespace hazemeta::losses
