#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hazemeta::datagen {

/// One synthetic haze domain: a distribution over scattering coefficient,
/// atmospheric light and a multiplicative depth bias emulating per-dataset
/// depth error.
struct DomainSpec {
    int id = 0;
    double beta_min = 0.4;
    double beta_max = 0.8;
    double a_min = 0.8;
    double a_max = 1.0;
    double depth_bias = 1.0;
    uint64_t rng_seed = 0;

    void validate() const;
};

/// Hazy/clear pair, both 3xHxW float tensors in [0,1].
struct SamplePair {
    torch::Tensor hazy;
    torch::Tensor clear;
    int domain_id = 0;
};

/// K sample pairs drawn from one domain.
struct Task {
    std::vector<SamplePair> pairs;
    int domain_id = 0;
};

struct GenConfig {
    int64_t height = 64;
    int64_t width = 64;
    int octaves = 3;
    double depth_scale = 1.0;
};

void check_image(const torch::Tensor& img, const char* what = "image");
void check_depth(const torch::Tensor& depth);

// t = exp(-beta * d), elementwise.
torch::Tensor transmission_map(const torch::Tensor& depth, double beta);

// I = J*t + A*(1 - t), clipped to [0,1].
torch::Tensor synthesize_hazy(const torch::Tensor& clear, const torch::Tensor& depth,
                              double beta, double atmospheric_light);

// Exact analytic inversion of synthesize_hazy; valid where no clipping occurred.
torch::Tensor invert_hazy(const torch::Tensor& hazy, const torch::Tensor& depth,
                          double beta, double atmospheric_light);

// Procedural clear image + smooth depth map, deterministic given the generator.
std::pair<torch::Tensor, torch::Tensor> procedural_clear_and_depth(
    const GenConfig& cfg, torch::Generator& gen);

/// Source of clear/depth pairs: procedural by default, or a fixed pool of
/// ingested images (depth synthesized procedurally for pool images).
class ClearSource {
public:
    explicit ClearSource(GenConfig cfg) : cfg_(std::move(cfg)) {}
    ClearSource(GenConfig cfg, std::vector<torch::Tensor> pool);

    bool empty() const { return !procedural_ && pool_.empty(); }
    std::pair<torch::Tensor, torch::Tensor> draw(torch::Generator& gen) const;
    const GenConfig& config() const { return cfg_; }

private:
    GenConfig cfg_;
    bool procedural_ = true;
    std::vector<torch::Tensor> pool_;
};

// Samples K hazy/clear pairs from one domain.
Task make_task(const DomainSpec& domain, const ClearSource& source, int k,
               torch::Generator& gen);

enum class PairingRule { Paired, HazyOnly };

struct IngestResult {
    std::vector<SamplePair> pairs;     // Paired mode
    std::vector<torch::Tensor> images; // HazyOnly mode
    std::vector<std::string> skipped;
};

// Loads 8-bit RGB images from a folder, normalized to [0,1]. In Paired mode
// `path` must contain `hazy/` and `clear/` subdirectories matched by stem.
IngestResult ingest_image_folder(const std::filesystem::path& path, PairingRule rule,
                                 int domain_id = 0);

torch::Tensor load_image(const std::filesystem::path& file);
void save_image(const torch::Tensor& img, const std::filesystem::path& file);

} // namespace hazemeta::datagen
