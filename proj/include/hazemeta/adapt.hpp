#pragma once

#include <torch/torch.h>

namespace hazemeta::adapt {

struct AdaptOptions {
    int64_t in_channels = 3;
    int64_t mid_channels = 32;
    int64_t out_channels = 64;
    bool context_gating = true; // false: plain conv blocks (CNN ablation)
};

/// Channel gate from global context: sigmoid(MLP(GAP(x))).
class ContextGateImpl : public torch::nn::Module {
public:
    ContextGateImpl(int64_t in_channels, int64_t out_channels);
    torch::Tensor forward(const torch::Tensor& x); // BxCxHxW -> BxC_out

    torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(ContextGate);

/// ReLU(BN(Conv_s2(x) * gate(x))); gate omitted when context_gating is off.
class CgConvBlockImpl : public torch::nn::Module {
public:
    CgConvBlockImpl(int64_t in_channels, int64_t out_channels, bool context_gating);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Conv2d conv{nullptr};
    torch::nn::BatchNorm2d bn{nullptr};
    ContextGate gate{nullptr};
    bool gated = false;
};
TORCH_MODULE(CgConvBlock);

/// Adaptation network: hazy image -> preliminary parameter, total stride 8.
class AdaptNetImpl : public torch::nn::Module {
public:
    explicit AdaptNetImpl(const AdaptOptions& opts = {});
    // x: Bx3xHxW (H, W divisible by 8) -> BxC_phi x H/8 x W/8
    torch::Tensor forward(const torch::Tensor& x);

    AdaptOptions options;
    CgConvBlock block1{nullptr}, block2{nullptr};
    torch::nn::Conv2d head{nullptr};
};
TORCH_MODULE(AdaptNet);

// Single-image convenience wrapper; pads to a multiple of 8 if needed.
torch::Tensor encode_preliminary(AdaptNet& net, const torch::Tensor& image);

} // namespace hazemeta::adapt
