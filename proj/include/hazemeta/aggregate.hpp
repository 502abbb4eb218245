#pragma once

#include <torch/torch.h>

#include <optional>

namespace hazemeta::aggregate {

/// Task-level conditioning parameter plus the weights that produced it.
struct TaskParam {
    torch::Tensor features;       // C_phi x H' x W'
    torch::Tensor source_weights; // K, nonnegative, sums to 1
    std::optional<int> domain_id;
};

enum class DistanceReduction {
    Mean, // per-element mean absolute difference (default)
    Sum,  // literal L1 norm; scales with tensor size
};

// Elementwise mean over the leading K dimension; weights all 1/K.
TaskParam average_aggregate(const torch::Tensor& prelims); // Kx...

// d_k = (1/(K-1)) sum_{s != k} |phi_k - phi_s| under the chosen reduction.
torch::Tensor pairwise_mean_distance(const torch::Tensor& prelims,
                                     DistanceReduction reduction = DistanceReduction::Mean);

// phi = sum_k softmax(-d)_k * phi_k; K=1 returns the input unchanged.
TaskParam distance_aware_aggregate(const torch::Tensor& prelims,
                                   DistanceReduction reduction = DistanceReduction::Mean);

// List-of-tensors conveniences.
TaskParam average_aggregate(const std::vector<torch::Tensor>& prelims);
TaskParam distance_aware_aggregate(const std::vector<torch::Tensor>& prelims,
                                   DistanceReduction reduction = DistanceReduction::Mean);

} // namespace hazemeta::aggregate
