#pragma once

#include <torch/torch.h>

#include <optional>

namespace hazemeta::backbone {

struct BackboneOptions {
    int64_t base_width = 32;
    int64_t phi_channels = 64;
    int64_t bottleneck_blocks = 4;
};

class ResidualBlockImpl : public torch::nn::Module {
public:
    explicit ResidualBlockImpl(int64_t channels);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
};
TORCH_MODULE(ResidualBlock);

/// Encoder/decoder dehazing network with additive skip fusions and a
/// bottleneck conditioned on the task parameter. Predicts a global residual.
class DehazeNetImpl : public torch::nn::Module {
public:
    explicit DehazeNetImpl(const BackboneOptions& opts = {});

    // Bilinear-resize phi to the bottleneck, concat, 1x1 project, residual add.
    torch::Tensor condition_fuse(const torch::Tensor& bottleneck, const torch::Tensor& phi);

    // x: Bx3xHxW; phi: (B x) C_phi x h x w or unset for unconditioned operation.
    // Output clamped to [0,1] only when the module is in eval mode.
    torch::Tensor forward(const torch::Tensor& x,
                          const std::optional<torch::Tensor>& phi = std::nullopt);

    BackboneOptions options;
    torch::nn::Conv2d head{nullptr}, out{nullptr};
    torch::nn::Conv2d enc1{nullptr}, enc2{nullptr}, enc3{nullptr};
    torch::nn::Conv2d dec1{nullptr}, dec2{nullptr}, dec3{nullptr};
    torch::nn::Conv2d fuse_proj{nullptr};
    torch::nn::ModuleList bottleneck{nullptr};
};
TORCH_MODULE(DehazeNet);

// Pads x to a multiple of 8, runs the network, crops back.
torch::Tensor dehaze(DehazeNet& net, const torch::Tensor& x,
                     const std::optional<torch::Tensor>& phi = std::nullopt);

int64_t parameter_count(const torch::nn::Module& m);

} // namespace hazemeta::backbone
