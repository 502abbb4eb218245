#include "hazemeta/backbone.hpp"

namespace hazemeta::backbone {

namespace F = torch::nn::functional;

namespace {

torch::nn::Conv2d conv3x3(int64_t in, int64_t out, int64_t stride = 1) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

torch::Tensor upsample2x(const torch::Tensor& x) {
    return F::interpolate(x, F::InterpolateFuncOptions()
                                 .scale_factor(std::vector<double>{2.0, 2.0})
                                 .mode(torch::kBilinear)
                                 .align_corners(false));
}

} // namespace

ResidualBlockImpl::ResidualBlockImpl(int64_t channels) {
    conv1 = register_module("conv1", conv3x3(channels, channels));
    conv2 = register_module("conv2", conv3x3(channels, channels));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
    return x + conv2(torch::relu(conv1(x)));
}

DehazeNetImpl::DehazeNetImpl(const BackboneOptions& opts) : options(opts) {
    const int64_t w = opts.base_width;
    const int64_t w2 = w + w / 2; // 48 at default width
    const int64_t w3 = 2 * w;     // 64
    head = register_module("head", conv3x3(3, w));
    enc1 = register_module("enc1", conv3x3(w, w2, 2));
    enc2 = register_module("enc2", conv3x3(w2, w3, 2));
    enc3 = register_module("enc3", conv3x3(w3, w3, 2));
    bottleneck = register_module("bottleneck", torch::nn::ModuleList());
    for (int64_t i = 0; i < opts.bottleneck_blocks; ++i) {
        bottleneck->push_back(ResidualBlock(w3));
    }
    fuse_proj = register_module(
        "fuse_proj",
        torch::nn::Conv2d(torch::nn::Conv2dOptions(w3 + opts.phi_channels, w3, 1)));
    dec1 = register_module("dec1", conv3x3(w3, w3));
    dec2 = register_module("dec2", conv3x3(w3, w2));
    dec3 = register_module("dec3", conv3x3(w2, w));
    out = register_module("out", conv3x3(w, 3));
}

torch::Tensor DehazeNetImpl::condition_fuse(const torch::Tensor& bottleneck_in,
                                            const torch::Tensor& phi) {
    auto p = phi.dim() == 3 ? phi.unsqueeze(0) : phi;
    if (p.size(0) != bottleneck_in.size(0)) {
        TORCH_CHECK(p.size(0) == 1, "condition_fuse: phi batch mismatch");
        p = p.expand({bottleneck_in.size(0), -1, -1, -1});
    }
    if (p.size(2) != bottleneck_in.size(2) || p.size(3) != bottleneck_in.size(3)) {
        p = F::interpolate(p, F::InterpolateFuncOptions()
                                  .size(std::vector<int64_t>{bottleneck_in.size(2),
                                                             bottleneck_in.size(3)})
                                  .mode(torch::kBilinear)
                                  .align_corners(false));
    }
    return bottleneck_in + fuse_proj(torch::cat({bottleneck_in, p}, 1));
}

torch::Tensor DehazeNetImpl::forward(const torch::Tensor& x,
                                     const std::optional<torch::Tensor>& phi) {
    TORCH_CHECK(x.size(-3) == 3, "DehazeNet: expected 3-channel input");
    TORCH_CHECK(x.size(-2) % 8 == 0 && x.size(-1) % 8 == 0,
                "DehazeNet: dims must be divisible by 8 (use dehaze() for padding)");
    auto xb = x.dim() == 3 ? x.unsqueeze(0) : x;
    auto h0 = torch::relu(head(xb));
    auto h1 = torch::relu(enc1(h0));
    auto h2 = torch::relu(enc2(h1));
    auto b = torch::relu(enc3(h2));
    for (auto& block : *bottleneck) {
        b = block->as<ResidualBlockImpl>()->forward(b);
    }
    if (phi.has_value()) {
        b = condition_fuse(b, *phi);
    }
    auto d1 = torch::relu(dec1(upsample2x(b)) + h2);
    auto d2 = torch::relu(dec2(upsample2x(d1)) + h1);
    auto d3 = torch::relu(dec3(upsample2x(d2)) + h0);
    auto residual = out(d3);
    TORCH_CHECK(residual.isfinite().all().item<bool>(),
                "DehazeNet: non-finite activations in output layer");
    auto y = xb + residual;
    if (!is_training()) {
        y = y.clamp(0.0, 1.0);
    }
    return x.dim() == 3 ? y.squeeze(0) : y;
}

torch::Tensor dehaze(DehazeNet& net, const torch::Tensor& x,
                     const std::optional<torch::Tensor>& phi) {
    auto xb = x.dim() == 3 ? x.unsqueeze(0) : x;
    int64_t h = xb.size(2);
    int64_t w = xb.size(3);
    int64_t pad_h = (8 - h % 8) % 8;
    int64_t pad_w = (8 - w % 8) % 8;
    auto padded = xb;
    if (pad_h || pad_w) {
        padded = F::pad(xb, F::PadFuncOptions({0, pad_w, 0, pad_h}).mode(torch::kReflect));
    }
    auto y = net->forward(padded, phi);
    y = y.slice(2, 0, h).slice(3, 0, w);
    return x.dim() == 3 ? y.squeeze(0) : y;
}

int64_t parameter_count(const torch::nn::Module& m) {
    int64_t n = 0;
    for (const auto& p : m.parameters()) n += p.numel();
    return n;
}

} // namespace hazemeta::backbone
