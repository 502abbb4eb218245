#pragma once

#include <torch/torch.h>

#include <vector>

#include "hazemeta/aggregate.hpp"

namespace hazemeta::dcr {

struct ContextualOptions {
    double bandwidth = 0.5;
    double epsilon = 1e-5;
    bool normalized = true; // 1/U inside the log keeps the loss nonnegative
};

// Row-stochastic UxV similarity between the channel feature sets of two
// task parameters; rows index channels of phi_a.
torch::Tensor contextual_similarity(const torch::Tensor& phi_a, const torch::Tensor& phi_b,
                                    const ContextualOptions& opts = {});

// -log(mean_u max_v A_uv); not symmetric in its arguments.
torch::Tensor contextual_loss(const torch::Tensor& phi_a, const torch::Tensor& phi_b,
                              const ContextualOptions& opts = {});

/// Small conv head predicting the source domain of a task parameter.
class DomainClassifierImpl : public torch::nn::Module {
public:
    DomainClassifierImpl(int64_t phi_channels, int64_t num_domains);
    torch::Tensor forward(const torch::Tensor& phi); // Bx C_phi xHxW -> BxI probs

    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
    torch::nn::Linear fc{nullptr};
};
TORCH_MODULE(DomainClassifier);

struct ContrastSelection {
    int64_t anchor_index = -1;
    int64_t positive_index = -1;
    std::vector<int64_t> negative_indices;
};

// From a batch where exactly one domain appears twice: the same-domain param
// with the higher confidence guides the other; ties pick the lower index.
ContrastSelection select_positive(const std::vector<int>& domain_ids,
                                  const torch::Tensor& confidences);

struct DcrOptions {
    ContextualOptions contextual;
    double sigma = 1e-7;
};

// L_cx(anchor, positive) / (L_cx(anchor, positive) + sum_neg L_cx(anchor, neg) + sigma).
// The positive is gradient-detached; negatives are not.
torch::Tensor dcr_loss(const ContrastSelection& sel, const std::vector<torch::Tensor>& params,
                       const DcrOptions& opts = {});

} // namespace hazemeta::dcr
