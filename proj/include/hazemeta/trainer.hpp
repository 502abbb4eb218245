#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hazemeta/adapt.hpp"
#include "hazemeta/aggregate.hpp"
#include "hazemeta/backbone.hpp"
#include "hazemeta/datagen.hpp"
#include "hazemeta/dcr.hpp"
#include "hazemeta/losses.hpp"

namespace hazemeta::trainer {

enum class AggregatorKind { Average, DistanceAware };
enum class AdaptKind { PlainConv, CgConv };

struct TrainConfig {
    int num_tasks = 3;        // N; must be >= 3 when DCR is on
    int samples_per_task = 4; // K
    int64_t crop_size = 64;
    double learning_rate = 2e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    int64_t max_steps = 2000;
    int64_t checkpoint_every = 0; // 0: final checkpoint only
    uint64_t seed = 0;
    bool deterministic = true;
    losses::LossWeights loss_weights;
    AggregatorKind aggregator = AggregatorKind::DistanceAware;
    aggregate::DistanceReduction distance_reduction = aggregate::DistanceReduction::Mean;
    AdaptKind adapt_net = AdaptKind::CgConv;
    bool dcr_enabled = true;
    bool conditioning_enabled = true; // false: plain backbone (ablation baseline)
    dcr::DcrOptions dcr_options;

    void validate(size_t num_domains) const;
    std::string to_json() const;
    static TrainConfig from_json(const std::string& json);
};

/// All trainable (and frozen) networks plus the config that shaped them.
struct ModelBundle {
    TrainConfig config;
    int num_domains = 2;
    adapt::AdaptNet adapt_net{nullptr};
    backbone::DehazeNet dehaze_net{nullptr};
    dcr::DomainClassifier classifier{nullptr};
    losses::FeatureExtractor extractor{nullptr};

    static ModelBundle create(const TrainConfig& config, int num_domains);
    std::vector<torch::Tensor> trainable_parameters() const;
    void train(bool on);
    void save(torch::serialize::OutputArchive& ar) const;
    static ModelBundle load(torch::serialize::InputArchive& ar);
};

struct Batch {
    std::vector<datagen::Task> tasks;
};

// Domain-structured batch satisfying the DCR pairing constraint: exactly one
// domain contributes two tasks, the rest come from distinct other domains
// (cycling when N-2 exceeds the number of remaining domains). Crops to
// crop_size with random flip/rotation augmentation.
Batch sample_batch(const std::vector<datagen::DomainSpec>& domains, const TrainConfig& config,
                   const datagen::ClearSource& source, torch::Generator& gen);

aggregate::TaskParam aggregate_prelims(const torch::Tensor& prelims, const TrainConfig& config);

class Trainer {
public:
    Trainer(TrainConfig config, std::vector<datagen::DomainSpec> domains);

    losses::LossBreakdown train_step(const Batch& batch);
    Batch next_batch(const datagen::ClearSource& source);

    // Runs max_steps steps, writes metrics.jsonl plus periodic and final
    // checkpoints under out_dir; returns the final checkpoint path.
    std::filesystem::path fit(const datagen::ClearSource& source,
                              const std::filesystem::path& out_dir);

    void save_checkpoint(const std::filesystem::path& file) const;
    void load_checkpoint(const std::filesystem::path& file);

    int64_t step() const { return step_; }
    ModelBundle& models() { return models_; }
    const std::vector<datagen::DomainSpec>& domains() const { return domains_; }

private:
    TrainConfig config_;
    std::vector<datagen::DomainSpec> domains_;
    ModelBundle models_;
    std::unique_ptr<torch::optim::Adam> optimizer_;
    torch::Generator data_gen_;
    int64_t step_ = 0;
};

/// Read-only inference over a trained checkpoint; never computes gradients.
class Session {
public:
    explicit Session(const std::filesystem::path& checkpoint);
    explicit Session(ModelBundle models);

    // phi from {hazy} + context (K=1 when context is empty), then one dehaze
    // pass. Context images with mismatched shapes are resized with a warning.
    torch::Tensor infer(const torch::Tensor& hazy,
                        const std::vector<torch::Tensor>& context = {}) const;

    const TrainConfig& config() const { return models_.config; }
    const ModelBundle& models() const { return models_; }

private:
    mutable ModelBundle models_;
};

inline constexpr int kCheckpointVersion = 1;

} // namespace hazemeta::trainer
