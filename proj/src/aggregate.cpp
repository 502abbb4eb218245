#include "hazemeta/aggregate.hpp"

namespace hazemeta::aggregate {

namespace {

torch::Tensor stack_checked(const std::vector<torch::Tensor>& prelims) {
    TORCH_CHECK(!prelims.empty(), "aggregate: empty preliminary-parameter list");
    return torch::stack(prelims);
}

} // namespace

TaskParam average_aggregate(const torch::Tensor& prelims) {
    TORCH_CHECK(prelims.dim() >= 2 && prelims.size(0) >= 1,
                "average_aggregate: expected Kx... tensor with K >= 1");
    auto k = prelims.size(0);
    return {prelims.mean(0), torch::full({k}, 1.0 / static_cast<double>(k), prelims.options()),
            std::nullopt};
}

torch::Tensor pairwise_mean_distance(const torch::Tensor& prelims, DistanceReduction reduction) {
    auto k = prelims.size(0);
    TORCH_CHECK(k >= 2, "pairwise_mean_distance: needs K >= 2");
    auto flat = prelims.reshape({k, -1});
    auto diffs = (flat.unsqueeze(0) - flat.unsqueeze(1)).abs(); // KxKxE
    auto norms = reduction == DistanceReduction::Sum ? diffs.sum(-1) : diffs.mean(-1);
    return norms.sum(1) / static_cast<double>(k - 1);
}

TaskParam distance_aware_aggregate(const torch::Tensor& prelims, DistanceReduction reduction) {
    auto k = prelims.size(0);
    TORCH_CHECK(k >= 1, "distance_aware_aggregate: needs K >= 1");
    if (k == 1) {
        return {prelims[0], torch::ones({1}, prelims.options()), std::nullopt};
    }
    auto d = pairwise_mean_distance(prelims, reduction);
    auto w = torch::softmax(-d, 0); // max-subtraction happens inside softmax
    auto shape = std::vector<int64_t>(static_cast<size_t>(prelims.dim()), 1);
    shape[0] = k;
    auto phi = (prelims * w.reshape(shape)).sum(0);
    return {phi, w, std::nullopt};
}

TaskParam average_aggregate(const std::vector<torch::Tensor>& prelims) {
    return average_aggregate(stack_checked(prelims));
}

TaskParam distance_aware_aggregate(const std::vector<torch::Tensor>& prelims,
                                   DistanceReduction reduction) {
    return distance_aware_aggregate(stack_checked(prelims), reduction);
}

} // namespace hazemeta::aggregate
