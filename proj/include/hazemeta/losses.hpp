#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

namespace hazemeta::losses {

struct LossWeights {
    double lambda1 = 0.5; // SSIM
    double lambda2 = 0.1; // contrastive regularization
    double lambda3 = 1.0; // cross entropy
    double lambda4 = 0.5; // DCR
};

struct LossBreakdown {
    double pixel = 0, ssim = 0, cr = 0, ce = 0, dcr = 0, total = 0;
};

enum class PixelReduction { Mean, Sum };

// Mean over samples of per-sample L1 distance.
torch::Tensor pixel_loss(const torch::Tensor& preds, const torch::Tensor& targets,
                         PixelReduction reduction = PixelReduction::Mean);

// Mean over samples of (1 - SSIM), 11x11 Gaussian window, sigma 1.5,
// C1=0.01^2, C2=0.03^2 on [0,1] range.
torch::Tensor ssim_loss(const torch::Tensor& preds, const torch::Tensor& targets);

// Mean SSIM itself (evaluation use).
torch::Tensor ssim_index(const torch::Tensor& a, const torch::Tensor& b);

/// Frozen multi-level convolutional feature extractor. The default is a
/// fixed-seed random pyramid; weights can be swapped for pretrained ones via
/// the checkpoint container.
class FeatureExtractorImpl : public torch::nn::Module {
public:
    explicit FeatureExtractorImpl(uint64_t seed = 0x5eed);
    std::vector<torch::Tensor> forward(const torch::Tensor& x); // 5 levels

    static const std::vector<double>& level_weights(); // {1/32,1/16,1/8,1/4,1}

    std::vector<torch::nn::Conv2d> stages;
};
TORCH_MODULE(FeatureExtractor);

// Ratio contrastive regularization over extractor levels:
// mean_samples sum_s alpha_s * L1(V_s(y), V_s(yhat)) / (L1(V_s(x), V_s(yhat)) + eps).
torch::Tensor cr_loss(const torch::Tensor& preds, const torch::Tensor& targets,
                      const torch::Tensor& hazys, FeatureExtractor& extractor,
                      double eps = 1e-7);

// -(1/N) sum log(probs[label]); probabilities clamped at 1e-12.
torch::Tensor ce_loss(const torch::Tensor& probs, const torch::Tensor& labels);

struct TotalLoss {
    torch::Tensor value;
    LossBreakdown breakdown;
};

// L = pixel + l1*ssim + l2*cr + l3*ce + l4*dcr; errors name any non-finite component.
TotalLoss total_loss(const torch::Tensor& pixel, const torch::Tensor& ssim,
                     const torch::Tensor& cr, const torch::Tensor& ce, const torch::Tensor& dcr,
                     const LossWeights& weights);

} // namespace hazemeta::losses
