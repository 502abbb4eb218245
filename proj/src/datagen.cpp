#include "hazemeta/datagen.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <iostream>
#include <map>
#include <stdexcept>

namespace hazemeta::datagen {

namespace F = torch::nn::functional;

void DomainSpec::validate() const {
    TORCH_CHECK(beta_min > 0 && beta_max >= beta_min, "DomainSpec: invalid beta range");
    TORCH_CHECK(a_min > 0 && a_max <= 1.0 && a_max >= a_min, "DomainSpec: A range must lie in (0,1]");
    TORCH_CHECK(depth_bias > 0, "DomainSpec: depth_bias must be positive");
}

void check_image(const torch::Tensor& img, const char* what) {
    TORCH_CHECK(img.dim() == 3 && img.size(0) == 3, what, ": expected 3xHxW tensor");
    TORCH_CHECK(img.size(1) >= 16 && img.size(2) >= 16, what, ": spatial dims must be >= 16");
    TORCH_CHECK(img.isfinite().all().item<bool>(), what, ": non-finite entries");
    TORCH_CHECK(img.min().item<double>() >= 0.0 && img.max().item<double>() <= 1.0,
                what, ": entries must lie in [0,1]");
}

void check_depth(const torch::Tensor& depth) {
    TORCH_CHECK(depth.dim() == 2, "depth: expected HxW tensor");
    TORCH_CHECK(depth.isfinite().all().item<bool>(), "depth: non-finite entries");
    TORCH_CHECK(depth.min().item<double>() >= 0.0, "depth: entries must be >= 0");
}

torch::Tensor transmission_map(const torch::Tensor& depth, double beta) {
    TORCH_CHECK(beta >= 0, "transmission_map: beta must be >= 0");
    TORCH_CHECK(depth.isfinite().all().item<bool>(), "transmission_map: non-finite depth");
    return torch::exp(-beta * depth);
}

torch::Tensor synthesize_hazy(const torch::Tensor& clear, const torch::Tensor& depth,
                              double beta, double atmospheric_light) {
    TORCH_CHECK(clear.dim() == 3 && clear.size(1) == depth.size(0) && clear.size(2) == depth.size(1),
                "synthesize_hazy: clear and depth shape mismatch");
    TORCH_CHECK(atmospheric_light > 0 && atmospheric_light <= 1.0,
                "synthesize_hazy: A must lie in (0,1]");
    auto t = transmission_map(depth, beta).unsqueeze(0);
    return (clear * t + atmospheric_light * (1.0 - t)).clamp(0.0, 1.0);
}

torch::Tensor invert_hazy(const torch::Tensor& hazy, const torch::Tensor& depth,
                          double beta, double atmospheric_light) {
    auto t = transmission_map(depth, beta).unsqueeze(0);
    return (hazy - atmospheric_light * (1.0 - t)) / t;
}

namespace {

// Smooth random field: sum of bilinearly upsampled coarse noise octaves.
torch::Tensor smooth_field(int64_t h, int64_t w, int channels, int octaves,
                           torch::Generator& gen) {
    auto out = torch::zeros({channels, h, w});
    double amp = 1.0;
    int64_t cells = 4;
    for (int o = 0; o < octaves; ++o) {
        auto coarse = torch::rand({1, channels, cells + 1, cells + 1}, gen);
        auto up = F::interpolate(coarse, F::InterpolateFuncOptions()
                                             .size(std::vector<int64_t>{h, w})
                                             .mode(torch::kBilinear)
                                             .align_corners(true));
        out += amp * up.squeeze(0);
        amp *= 0.5;
        cells *= 2;
    }
    return out;
}

} // namespace

std::pair<torch::Tensor, torch::Tensor> procedural_clear_and_depth(
    const GenConfig& cfg, torch::Generator& gen) {
    TORCH_CHECK(cfg.height >= 16 && cfg.width >= 16, "GenConfig: dims must be >= 16");
    auto clear = smooth_field(cfg.height, cfg.width, 3, cfg.octaves, gen);
    // Sparse bright speckles give the clear images high-frequency texture.
    auto speckle = (torch::rand({1, cfg.height, cfg.width}, gen) > 0.98).to(torch::kFloat32);
    clear = clear / clear.amax() * 0.85 + 0.15 * speckle;
    clear = clear.clamp(0.0, 1.0);

    auto depth = smooth_field(cfg.height, cfg.width, 1, std::max(1, cfg.octaves - 1), gen)
                     .squeeze(0);
    depth = (depth - depth.min()) / (depth.max() - depth.min() + 1e-12);
    depth = depth * cfg.depth_scale;
    return {clear, depth};
}

ClearSource::ClearSource(GenConfig cfg, std::vector<torch::Tensor> pool)
    : cfg_(std::move(cfg)), procedural_(false), pool_(std::move(pool)) {
    TORCH_CHECK(!pool_.empty(), "ClearSource: empty image pool");
}

std::pair<torch::Tensor, torch::Tensor> ClearSource::draw(torch::Generator& gen) const {
    if (procedural_) {
        return procedural_clear_and_depth(cfg_, gen);
    }
    auto idx = torch::randint(static_cast<int64_t>(pool_.size()), {1}, gen).item<int64_t>();
    auto clear = pool_[static_cast<size_t>(idx)];
    GenConfig dcfg = cfg_;
    dcfg.height = clear.size(1);
    dcfg.width = clear.size(2);
    auto depth = smooth_field(dcfg.height, dcfg.width, 1, std::max(1, dcfg.octaves - 1), gen)
                     .squeeze(0);
    depth = (depth - depth.min()) / (depth.max() - depth.min() + 1e-12) * dcfg.depth_scale;
    return {clear, depth};
}

Task make_task(const DomainSpec& domain, const ClearSource& source, int k,
               torch::Generator& gen) {
    domain.validate();
    TORCH_CHECK(k >= 1, "make_task: K must be >= 1");
    TORCH_CHECK(!source.empty(), "make_task: empty clear source");
    Task task;
    task.domain_id = domain.id;
    task.pairs.reserve(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) {
        auto [clear, depth] = source.draw(gen);
        auto u = torch::rand({2}, gen);
        double beta = domain.beta_min + (domain.beta_max - domain.beta_min) * u[0].item<double>();
        double a = domain.a_min + (domain.a_max - domain.a_min) * u[1].item<double>();
        auto hazy = synthesize_hazy(clear, depth * domain.depth_bias, beta, a);
        task.pairs.push_back({hazy, clear, domain.id});
    }
    return task;
}

torch::Tensor load_image(const std::filesystem::path& file) {
    cv::Mat bgr = cv::imread(file.string(), cv::IMREAD_COLOR);
    TORCH_CHECK(!bgr.empty(), "load_image: cannot decode ", file.string());
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    auto t = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
    return t.permute({2, 0, 1}).to(torch::kFloat32) / 255.0;
}

void save_image(const torch::Tensor& img, const std::filesystem::path& file) {
    TORCH_CHECK(img.dim() == 3 && img.size(0) == 3, "save_image: expected 3xHxW tensor");
    auto u8 = (img.clamp(0, 1) * 255.0).round().to(torch::kUInt8).permute({1, 2, 0}).contiguous();
    cv::Mat rgb(static_cast<int>(u8.size(0)), static_cast<int>(u8.size(1)), CV_8UC3, u8.data_ptr());
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    TORCH_CHECK(cv::imwrite(file.string(), bgr), "save_image: cannot write ", file.string());
}

IngestResult ingest_image_folder(const std::filesystem::path& path, PairingRule rule,
                                 int domain_id) {
    namespace fs = std::filesystem;
    TORCH_CHECK(fs::exists(path), "ingest_image_folder: no such folder ", path.string());
    IngestResult result;

    auto try_load = [&](const fs::path& f) -> std::optional<torch::Tensor> {
        try {
            return load_image(f);
        } catch (const std::exception&) {
            result.skipped.push_back(f.string());
            std::cerr << "warning: skipping undecodable file " << f << "\n";
            return std::nullopt;
        }
    };

    if (rule == PairingRule::HazyOnly) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(path)) {
            if (e.is_regular_file()) files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            if (auto img = try_load(f)) result.images.push_back(*img);
        }
        TORCH_CHECK(!result.images.empty(), "ingest_image_folder: no usable images in ",
                    path.string());
        return result;
    }

    fs::path hazy_dir = path / "hazy";
    fs::path clear_dir = path / "clear";
    TORCH_CHECK(fs::exists(hazy_dir) && fs::exists(clear_dir),
                "ingest_image_folder: paired mode needs hazy/ and clear/ subdirs under ",
                path.string());
    std::map<std::string, fs::path> clears;
    for (const auto& e : fs::directory_iterator(clear_dir)) {
        if (e.is_regular_file()) clears[e.path().stem().string()] = e.path();
    }
    std::vector<fs::path> hazies;
    for (const auto& e : fs::directory_iterator(hazy_dir)) {
        if (e.is_regular_file()) hazies.push_back(e.path());
    }
    std::sort(hazies.begin(), hazies.end());
    for (const auto& hf : hazies) {
        auto it = clears.find(hf.stem().string());
        if (it == clears.end()) continue;
        auto hazy = try_load(hf);
        auto clear = try_load(it->second);
        if (hazy && clear) result.pairs.push_back({*hazy, *clear, domain_id});
    }
    TORCH_CHECK(!result.pairs.empty(), "ingest_image_folder: no usable pairs in ", path.string());
    return result;
}

} // namespace hazemeta::datagen
