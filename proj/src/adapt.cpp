#include "hazemeta/adapt.hpp"

namespace hazemeta::adapt {

namespace F = torch::nn::functional;

ContextGateImpl::ContextGateImpl(int64_t in_channels, int64_t out_channels) {
    fc1 = register_module("fc1", torch::nn::Linear(in_channels, in_channels));
    fc2 = register_module("fc2", torch::nn::Linear(in_channels, out_channels));
}

torch::Tensor ContextGateImpl::forward(const torch::Tensor& x) {
    auto pooled = x.mean({2, 3}); // BxC
    return torch::sigmoid(fc2(torch::relu(fc1(pooled))));
}

CgConvBlockImpl::CgConvBlockImpl(int64_t in_channels, int64_t out_channels, bool context_gating)
    : gated(context_gating) {
    conv = register_module(
        "conv", torch::nn::Conv2d(
                    torch::nn::Conv2dOptions(in_channels, out_channels, 3).stride(2).padding(1)));
    bn = register_module("bn", torch::nn::BatchNorm2d(out_channels));
    if (gated) {
        gate = register_module("gate", ContextGate(in_channels, out_channels));
    }
}

torch::Tensor CgConvBlockImpl::forward(const torch::Tensor& x) {
    TORCH_CHECK(x.size(2) >= 3 && x.size(3) >= 3, "CgConvBlock: spatial dims below kernel size");
    auto y = conv(x);
    if (gated) {
        y = y * gate(x).unsqueeze(-1).unsqueeze(-1);
    }
    return torch::relu(bn(y));
}

AdaptNetImpl::AdaptNetImpl(const AdaptOptions& opts) : options(opts) {
    block1 = register_module("block1",
                             CgConvBlock(opts.in_channels, opts.mid_channels, opts.context_gating));
    block2 = register_module(
        "block2", CgConvBlock(opts.mid_channels, opts.out_channels, opts.context_gating));
    head = register_module(
        "head", torch::nn::Conv2d(torch::nn::Conv2dOptions(opts.out_channels, opts.out_channels, 3)
                                      .stride(2)
                                      .padding(1)));
}

torch::Tensor AdaptNetImpl::forward(const torch::Tensor& x) {
    TORCH_CHECK(x.isfinite().all().item<bool>(), "AdaptNet: non-finite input");
    return head(block2(block1(x)));
}

torch::Tensor encode_preliminary(AdaptNet& net, const torch::Tensor& image) {
    auto x = image.dim() == 3 ? image.unsqueeze(0) : image;
    int64_t pad_h = (8 - x.size(2) % 8) % 8;
    int64_t pad_w = (8 - x.size(3) % 8) % 8;
    if (pad_h || pad_w) {
        x = F::pad(x, F::PadFuncOptions({0, pad_w, 0, pad_h}).mode(torch::kReflect));
    }
    auto phi = net->forward(x);
    return image.dim() == 3 ? phi.squeeze(0) : phi;
}

} // namespace hazemeta::adapt
