#include "hazemeta/evaluate.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "hazemeta/errors.hpp"
#include "hazemeta/losses.hpp"

namespace hazemeta::evaluate {

using json = nlohmann::json;
namespace F = torch::nn::functional;

double psnr(const torch::Tensor& a, const torch::Tensor& b) {
    TORCH_CHECK(a.sizes() == b.sizes(), "psnr: shape mismatch");
    double mse = (a - b).pow(2).mean().item<double>();
    if (mse <= 0) return 100.0;
    return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

double ssim_metric(const torch::Tensor& a, const torch::Tensor& b) {
    return losses::ssim_index(a, b).item<double>();
}

double dark_channel_mean(const torch::Tensor& img, int64_t patch) {
    TORCH_CHECK(img.dim() == 3, "dark_channel_mean: expected CxHxW");
    TORCH_CHECK(patch >= 1 && patch % 2 == 1, "dark_channel_mean: patch must be odd and >= 1");
    patch = std::min({patch, img.size(1), img.size(2)});
    if (patch % 2 == 0) --patch;
    auto channel_min = std::get<0>(img.min(0, /*keepdim=*/true)).unsqueeze(0); // 1x1xHxW
    auto dark = -F::max_pool2d(-channel_min, F::MaxPool2dFuncOptions(patch)
                                                 .stride(1)
                                                 .padding(patch / 2));
    return dark.mean().item<double>();
}

std::string EvalReport::to_json() const {
    json j;
    j["checkpoint"] = checkpoint;
    j["seed"] = seed;
    j["config_hash"] = config_hash;
    j["domains"] = json::array();
    for (const auto& d : domains) {
        j["domains"].push_back({{"domain_id", d.domain_id},
                                {"psnr_mean", d.psnr_mean},
                                {"ssim_mean", d.ssim_mean},
                                {"dark_channel_dehazed", d.dark_channel_dehazed},
                                {"dark_channel_hazy", d.dark_channel_hazy}});
    }
    return j.dump(2);
}

std::string EvalReport::to_csv() const {
    std::ostringstream os;
    os << "domain_id,psnr_mean,ssim_mean,dark_channel_dehazed,dark_channel_hazy\n";
    for (const auto& d : domains) {
        os << d.domain_id << "," << d.psnr_mean << "," << d.ssim_mean << ","
           << d.dark_channel_dehazed << "," << d.dark_channel_hazy << "\n";
    }
    return os.str();
}

EvalReport evaluate_session(const trainer::Session& session,
                            const std::vector<datagen::DomainSpec>& domains,
                            const EvalOptions& opts) {
    EvalReport report;
    report.seed = opts.seed;
    report.config_hash = std::to_string(std::hash<std::string>{}(session.config().to_json()));

    datagen::GenConfig gcfg;
    gcfg.height = opts.image_size;
    gcfg.width = opts.image_size;
    datagen::ClearSource source(gcfg);

    for (const auto& domain : domains) {
        auto gen = at::detail::createCPUGenerator(opts.seed + 7919 * (domain.id + 1));
        DomainMetrics m;
        m.domain_id = domain.id;
        for (int i = 0; i < opts.n_images; ++i) {
            // One evaluation pair plus unlabeled same-domain context images.
            auto task = datagen::make_task(domain, source, std::max(1, opts.context_size), gen);
            const auto& probe = task.pairs.front();
            std::vector<torch::Tensor> context;
            for (size_t k = 1; k < task.pairs.size(); ++k) {
                context.push_back(task.pairs[k].hazy);
            }
            auto dehazed = session.infer(probe.hazy, context);
            m.psnr_mean += psnr(dehazed, probe.clear);
            m.ssim_mean += ssim_metric(dehazed, probe.clear);
            m.dark_channel_dehazed += dark_channel_mean(dehazed);
            m.dark_channel_hazy += dark_channel_mean(probe.hazy);
        }
        m.psnr_mean /= opts.n_images;
        m.ssim_mean /= opts.n_images;
        m.dark_channel_dehazed /= opts.n_images;
        m.dark_channel_hazy /= opts.n_images;
        report.domains.push_back(m);
    }
    return report;
}

EvalReport evaluate_checkpoint(const std::filesystem::path& checkpoint,
                               const std::vector<datagen::DomainSpec>& domains,
                               const EvalOptions& opts) {
    trainer::Session session(checkpoint);
    auto report = evaluate_session(session, domains, opts);
    report.checkpoint = checkpoint.string();
    return report;
}

std::vector<AblationVariant> ablation_variants(const trainer::TrainConfig& base) {
    using trainer::AdaptKind;
    using trainer::AggregatorKind;
    std::vector<AblationVariant> variants;

    auto make = [&](const std::string& name, bool conditioning, AdaptKind adapt,
                    AggregatorKind agg, bool dcr) {
        auto cfg = base;
        cfg.conditioning_enabled = conditioning;
        cfg.adapt_net = adapt;
        cfg.aggregator = agg;
        cfg.dcr_enabled = dcr;
        variants.push_back({name, cfg});
    };
    make("baseline", false, AdaptKind::CgConv, AggregatorKind::Average, false);
    make("an_cnn_mean", true, AdaptKind::PlainConv, AggregatorKind::Average, false);
    make("an_cg_mean", true, AdaptKind::CgConv, AggregatorKind::Average, false);
    make("an_cg_daa", true, AdaptKind::CgConv, AggregatorKind::DistanceAware, false);
    make("full_dcr", true, AdaptKind::CgConv, AggregatorKind::DistanceAware, true);
    return variants;
}

namespace {

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace

std::vector<AblationRow> run_ablation(const trainer::TrainConfig& base,
                                      const std::vector<datagen::DomainSpec>& train_domains,
                                      const std::vector<datagen::DomainSpec>& heldout_domains,
                                      const AblationOptions& opts,
                                      const std::filesystem::path& out_dir) {
    TORCH_CHECK(train_domains.size() >= 2, "run_ablation: needs >= 2 training domains");
    TORCH_CHECK(!heldout_domains.empty(), "run_ablation: needs a held-out domain");
    std::filesystem::create_directories(out_dir);

    datagen::GenConfig gcfg;
    gcfg.height = base.crop_size + 16;
    gcfg.width = base.crop_size + 16;

    std::vector<AblationRow> rows;
    for (const auto& variant : ablation_variants(base)) {
        AblationRow row;
        row.name = variant.name;
        try {
            for (auto seed : opts.seeds) {
                auto cfg = variant.config;
                cfg.seed = seed;
                trainer::Trainer tr(cfg, train_domains);
                datagen::ClearSource source(gcfg);
                auto ckpt = tr.fit(source, out_dir / (variant.name + "_s" +
                                                      std::to_string(seed)));
                auto report = evaluate_checkpoint(ckpt, heldout_domains, opts.eval);
                double mean_psnr = 0;
                for (const auto& d : report.domains) mean_psnr += d.psnr_mean;
                row.psnr_per_seed.push_back(mean_psnr / report.domains.size());
            }
            row.psnr_median = median(row.psnr_per_seed);
        } catch (const std::exception& e) {
            row.failed = true;
            row.error = e.what();
            std::cerr << "ablation variant '" << variant.name << "' failed: " << e.what() << "\n";
        }
        rows.push_back(std::move(row));
    }

    std::ofstream csv(out_dir / "ablation.csv");
    csv << ablation_csv(rows);
    write_ablation_plot_svg(rows, out_dir / "ablation.svg");
    return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream os;
    os << "variant,psnr_median,psnr_per_seed,status\n";
    for (const auto& r : rows) {
        os << r.name << ",";
        if (r.failed) {
            os << ",,FAILED: " << r.error << "\n";
            continue;
        }
        os << r.psnr_median << ",\"";
        for (size_t i = 0; i < r.psnr_per_seed.size(); ++i) {
            os << (i ? ";" : "") << r.psnr_per_seed[i];
        }
        os << "\",ok\n";
    }
    return os.str();
}

void write_ablation_plot_svg(const std::vector<AblationRow>& rows,
                             const std::filesystem::path& file) {
    double lo = 1e9, hi = -1e9;
    for (const auto& r : rows) {
        if (r.failed) continue;
        lo = std::min(lo, r.psnr_median);
        hi = std::max(hi, r.psnr_median);
    }
    if (hi <= lo) {
        lo -= 1;
        hi += 1;
    }
    const double w = 640, h = 360, ml = 60, mb = 50, mt = 20, mr = 20;
    auto xpos = [&](size_t i) {
        return ml + (w - ml - mr) * (rows.size() > 1 ? double(i) / (rows.size() - 1) : 0.5);
    };
    auto ypos = [&](double v) { return h - mb - (h - mb - mt) * (v - lo) / (hi - lo); };

    std::ofstream out(file);
    if (!out) throw IoError("write_ablation_plot_svg: cannot write " + file.string());
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
    out << "<rect width='100%' height='100%' fill='white'/>\n";
    out << "<text x='10' y='16' font-size='13'>held-out PSNR (dB), median over seeds</text>\n";
    out << "<polyline fill='none' stroke='steelblue' stroke-width='2' points='";
    for (size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].failed) continue;
        out << xpos(i) << "," << ypos(rows[i].psnr_median) << " ";
    }
    out << "'/>\n";
    for (size_t i = 0; i < rows.size(); ++i) {
        double x = xpos(i);
        if (!rows[i].failed) {
            double y = ypos(rows[i].psnr_median);
            out << "<circle cx='" << x << "' cy='" << y << "' r='4' fill='steelblue'/>\n";
            out << "<text x='" << x << "' y='" << y - 8 << "' font-size='11' text-anchor='middle'>"
                << rows[i].psnr_median << "</text>\n";
        }
        out << "<text x='" << x << "' y='" << h - mb + 18
            << "' font-size='11' text-anchor='middle'>" << rows[i].name
            << (rows[i].failed ? " (failed)" : "") << "</text>\n";
    }
    out << "</svg>\n";
}

} // namespace hazemeta::evaluate
