#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <string>
#include <vector>

#include "hazemeta/datagen.hpp"
#include "hazemeta/trainer.hpp"

namespace hazemeta::evaluate {

// 10*log10(1/MSE) on [0,1] range; capped at 100 dB when MSE is 0.
double psnr(const torch::Tensor& a, const torch::Tensor& b);

double ssim_metric(const torch::Tensor& a, const torch::Tensor& b);

// Mean over pixels of the patch-and-channel minimum; haze-density proxy.
double dark_channel_mean(const torch::Tensor& img, int64_t patch = 15);

struct DomainMetrics {
    int domain_id = 0;
    double psnr_mean = 0;
    double ssim_mean = 0;
    double dark_channel_dehazed = 0;
    double dark_channel_hazy = 0;
};

struct EvalReport {
    std::vector<DomainMetrics> domains;
    std::string checkpoint;
    uint64_t seed = 0;
    std::string config_hash;

    std::string to_json() const;
    std::string to_csv() const;
};

struct EvalOptions {
    int n_images = 8;
    uint64_t seed = 12345;
    int64_t image_size = 64;
    int context_size = 4; // K for per-image inference context
};

EvalReport evaluate_checkpoint(const std::filesystem::path& checkpoint,
                               const std::vector<datagen::DomainSpec>& domains,
                               const EvalOptions& opts);

EvalReport evaluate_session(const trainer::Session& session,
                            const std::vector<datagen::DomainSpec>& domains,
                            const EvalOptions& opts);

struct AblationVariant {
    std::string name;
    trainer::TrainConfig config;
};

// The five-row configuration ladder: backbone-only baseline, plain-conv
// adaptation with mean aggregation, context-gated adaptation with mean and
// with distance-aware aggregation, and the full model with DCR.
std::vector<AblationVariant> ablation_variants(const trainer::TrainConfig& base);

struct AblationRow {
    std::string name;
    std::vector<double> psnr_per_seed;
    double psnr_median = 0;
    bool failed = false;
    std::string error;
};

struct AblationOptions {
    std::vector<uint64_t> seeds = {1, 2, 3};
    EvalOptions eval;
};

std::vector<AblationRow> run_ablation(const trainer::TrainConfig& base,
                                      const std::vector<datagen::DomainSpec>& train_domains,
                                      const std::vector<datagen::DomainSpec>& heldout_domains,
                                      const AblationOptions& opts,
                                      const std::filesystem::path& out_dir);

std::string ablation_csv(const std::vector<AblationRow>& rows);
void write_ablation_plot_svg(const std::vector<AblationRow>& rows,
                             const std::filesystem::path& file);

} // namespace hazemeta::evaluate
