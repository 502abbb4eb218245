#include "hazemeta/dcr.hpp"

#include <map>

namespace hazemeta::dcr {

torch::Tensor contextual_similarity(const torch::Tensor& phi_a, const torch::Tensor& phi_b,
                                    const ContextualOptions& opts) {
    TORCH_CHECK(phi_a.dim() == 3 && phi_b.dim() == 3, "contextual_similarity: expected CxHxW");
    TORCH_CHECK(phi_a.size(0) == phi_b.size(0), "contextual_similarity: channel count mismatch");
    auto u = phi_a.flatten(1); // UxP
    auto v = phi_b.flatten(1); // VxP
    // Shift both feature sets by the target's mean feature (contextual-loss convention).
    auto mu = v.mean(0, /*keepdim=*/true);
    u = u - mu;
    v = v - mu;
    auto un = u / (u.norm(2, 1, /*keepdim=*/true) + opts.epsilon);
    auto vn = v / (v.norm(2, 1, /*keepdim=*/true) + opts.epsilon);
    auto dist = 1.0 - un.matmul(vn.t()); // cosine distance, UxV
    auto rel = dist / (std::get<0>(dist.min(1, /*keepdim=*/true)) + opts.epsilon);
    auto w = torch::exp((1.0 - rel) / opts.bandwidth);
    return w / w.sum(1, /*keepdim=*/true);
}

torch::Tensor contextual_loss(const torch::Tensor& phi_a, const torch::Tensor& phi_b,
                              const ContextualOptions& opts) {
    auto a = contextual_similarity(phi_a, phi_b, opts);
    auto row_max = std::get<0>(a.max(1));
    auto agg = opts.normalized ? row_max.mean() : row_max.sum();
    return -torch::log(agg + 1e-12);
}

DomainClassifierImpl::DomainClassifierImpl(int64_t phi_channels, int64_t num_domains) {
    conv1 = register_module(
        "conv1",
        torch::nn::Conv2d(torch::nn::Conv2dOptions(phi_channels, 32, 3).stride(2).padding(1)));
    conv2 = register_module(
        "conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(32, 32, 3).stride(2).padding(1)));
    fc = register_module("fc", torch::nn::Linear(32, num_domains));
}

torch::Tensor DomainClassifierImpl::forward(const torch::Tensor& phi) {
    auto x = phi.dim() == 3 ? phi.unsqueeze(0) : phi;
    x = torch::relu(conv1(x));
    x = torch::relu(conv2(x));
    auto logits = fc(x.mean({2, 3}));
    auto probs = torch::softmax(logits, 1);
    return phi.dim() == 3 ? probs.squeeze(0) : probs;
}

ContrastSelection select_positive(const std::vector<int>& domain_ids,
                                  const torch::Tensor& confidences) {
    TORCH_CHECK(static_cast<int64_t>(domain_ids.size()) == confidences.size(0),
                "select_positive: size mismatch");
    std::map<int, std::vector<int64_t>> by_domain;
    for (size_t i = 0; i < domain_ids.size(); ++i) {
        by_domain[domain_ids[i]].push_back(static_cast<int64_t>(i));
    }
    const std::vector<int64_t>* pair = nullptr;
    int pair_domain = -1;
    for (const auto& [dom, idxs] : by_domain) {
        if (idxs.size() == 2) {
            TORCH_CHECK(pair == nullptr, "select_positive: more than one same-domain pair");
            pair = &idxs;
            pair_domain = dom;
        } else {
            TORCH_CHECK(idxs.size() == 1, "select_positive: domain appears more than twice");
        }
    }
    TORCH_CHECK(pair != nullptr, "select_positive: batch has no same-domain pair (sampling bug)");

    auto c0 = confidences[(*pair)[0]].item<double>();
    auto c1 = confidences[(*pair)[1]].item<double>();
    ContrastSelection sel;
    if (c1 > c0) {
        sel.positive_index = (*pair)[1];
        sel.anchor_index = (*pair)[0];
    } else {
        sel.positive_index = (*pair)[0];
        sel.anchor_index = (*pair)[1];
    }
    for (size_t i = 0; i < domain_ids.size(); ++i) {
        if (domain_ids[i] != pair_domain) sel.negative_indices.push_back(static_cast<int64_t>(i));
    }
    return sel;
}

torch::Tensor dcr_loss(const ContrastSelection& sel, const std::vector<torch::Tensor>& params,
                       const DcrOptions& opts) {
    TORCH_CHECK(sel.anchor_index >= 0 && sel.positive_index >= 0 &&
                    sel.anchor_index != sel.positive_index,
                "dcr_loss: invalid selection");
    const auto& anchor = params[static_cast<size_t>(sel.anchor_index)];
    auto positive = params[static_cast<size_t>(sel.positive_index)].detach();
    auto num = contextual_loss(anchor, positive, opts.contextual);
    auto denom = num + opts.sigma;
    for (auto n : sel.negative_indices) {
        denom = denom + contextual_loss(anchor, params[static_cast<size_t>(n)], opts.contextual);
    }
    return num / denom;
}

} // namespace hazemeta::dcr
