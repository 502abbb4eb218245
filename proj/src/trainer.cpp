#include "hazemeta/trainer.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>

#include "hazemeta/errors.hpp"

namespace hazemeta::trainer {

using json = nlohmann::json;

void TrainConfig::validate(size_t num_domains) const {
    if (samples_per_task < 1) throw ConfigError("train.k must be >= 1");
    if (learning_rate <= 0) throw ConfigError("train.lr must be positive");
    if (crop_size < 16) throw ConfigError("train.crop_size must be >= 16");
    if (num_tasks < 1) throw ConfigError("train.n_tasks must be >= 1");
    if (dcr_enabled && num_domains < 2) {
        throw ConfigError("train.dcr requires at least 2 training domains");
    }
}

std::string TrainConfig::to_json() const {
    json j;
    j["n_tasks"] = num_tasks;
    j["k"] = samples_per_task;
    j["crop_size"] = crop_size;
    j["lr"] = learning_rate;
    j["adam_beta1"] = adam_beta1;
    j["adam_beta2"] = adam_beta2;
    j["max_steps"] = max_steps;
    j["checkpoint_every"] = checkpoint_every;
    j["seed"] = seed;
    j["deterministic"] = deterministic;
    j["lambda1"] = loss_weights.lambda1;
    j["lambda2"] = loss_weights.lambda2;
    j["lambda3"] = loss_weights.lambda3;
    j["lambda4"] = loss_weights.lambda4;
    j["aggregator"] = aggregator == AggregatorKind::Average ? "average" : "distance_aware";
    j["distance_reduction"] =
        distance_reduction == aggregate::DistanceReduction::Sum ? "sum" : "mean";
    j["adapt_net"] = adapt_net == AdaptKind::PlainConv ? "plain_conv" : "cg_conv";
    j["dcr"] = dcr_enabled;
    j["conditioning"] = conditioning_enabled;
    j["sigma"] = dcr_options.sigma;
    j["bandwidth"] = dcr_options.contextual.bandwidth;
    j["cx_normalized"] = dcr_options.contextual.normalized;
    return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    TrainConfig c;
    c.num_tasks = j.at("n_tasks");
    c.samples_per_task = j.at("k");
    c.crop_size = j.at("crop_size");
    c.learning_rate = j.at("lr");
    c.adam_beta1 = j.at("adam_beta1");
    c.adam_beta2 = j.at("adam_beta2");
    c.max_steps = j.at("max_steps");
    c.checkpoint_every = j.at("checkpoint_every");
    c.seed = j.at("seed");
    c.deterministic = j.at("deterministic");
    c.loss_weights = {j.at("lambda1"), j.at("lambda2"), j.at("lambda3"), j.at("lambda4")};
    c.aggregator = j.at("aggregator") == "average" ? AggregatorKind::Average
                                                   : AggregatorKind::DistanceAware;
    c.distance_reduction = j.at("distance_reduction") == "sum"
                               ? aggregate::DistanceReduction::Sum
                               : aggregate::DistanceReduction::Mean;
    c.adapt_net = j.at("adapt_net") == "plain_conv" ? AdaptKind::PlainConv : AdaptKind::CgConv;
    c.dcr_enabled = j.at("dcr");
    c.conditioning_enabled = j.at("conditioning");
    c.dcr_options.sigma = j.at("sigma");
    c.dcr_options.contextual.bandwidth = j.at("bandwidth");
    c.dcr_options.contextual.normalized = j.at("cx_normalized");
    return c;
}

ModelBundle ModelBundle::create(const TrainConfig& config, int num_domains) {
    ModelBundle b;
    b.config = config;
    b.num_domains = num_domains;
    torch::manual_seed(config.seed);
    adapt::AdaptOptions aopts;
    aopts.context_gating = config.adapt_net == AdaptKind::CgConv;
    b.adapt_net = adapt::AdaptNet(aopts);
    backbone::BackboneOptions bopts;
    bopts.phi_channels = aopts.out_channels;
    b.dehaze_net = backbone::DehazeNet(bopts);
    b.classifier = dcr::DomainClassifier(aopts.out_channels, num_domains);
    b.extractor = losses::FeatureExtractor(); // fixed seed, frozen
    return b;
}

std::vector<torch::Tensor> ModelBundle::trainable_parameters() const {
    std::vector<torch::Tensor> params;
    auto add = [&](const torch::nn::Module& m) {
        for (const auto& p : m.parameters()) {
            if (p.requires_grad()) params.push_back(p);
        }
    };
    if (config.conditioning_enabled) {
        add(*adapt_net);
        add(*classifier);
    }
    add(*dehaze_net);
    return params;
}

void ModelBundle::train(bool on) {
    adapt_net->train(on);
    dehaze_net->train(on);
    classifier->train(on);
    extractor->train(false);
}

void ModelBundle::save(torch::serialize::OutputArchive& ar) const {
    ar.write("version", torch::tensor(kCheckpointVersion));
    ar.write("config", config.to_json());
    ar.write("num_domains", torch::tensor(num_domains));
    auto save_module = [&](const char* name, const torch::nn::Module& m) {
        torch::serialize::OutputArchive sub;
        m.save(sub);
        ar.write(name, sub);
    };
    save_module("adapt", *adapt_net);
    save_module("backbone", *dehaze_net);
    save_module("classifier", *classifier);
    save_module("extractor", *extractor);
}

ModelBundle ModelBundle::load(torch::serialize::InputArchive& ar) {
    torch::Tensor version;
    ar.read("version", version);
    if (version.item<int>() != kCheckpointVersion) {
        throw IoError("checkpoint: unsupported version " + std::to_string(version.item<int>()));
    }
    c10::IValue config_text;
    ar.read("config", config_text);
    torch::Tensor nd;
    ar.read("num_domains", nd);
    auto bundle = create(TrainConfig::from_json(config_text.toStringRef()), nd.item<int>());
    auto load_module = [&](const char* name, torch::nn::Module& m) {
        torch::serialize::InputArchive sub;
        ar.read(name, sub);
        m.load(sub);
    };
    load_module("adapt", *bundle.adapt_net);
    load_module("backbone", *bundle.dehaze_net);
    load_module("classifier", *bundle.classifier);
    load_module("extractor", *bundle.extractor);
    return bundle;
}

namespace {

datagen::SamplePair augment_pair(const datagen::SamplePair& pair, int64_t crop,
                                 torch::Generator& gen) {
    auto h = pair.hazy.size(1);
    auto w = pair.hazy.size(2);
    TORCH_CHECK(h >= crop && w >= crop, "augment: source smaller than crop size");
    auto draws = torch::randint(0, 1 << 20, {5}, gen);
    int64_t y0 = draws[0].item<int64_t>() % (h - crop + 1);
    int64_t x0 = draws[1].item<int64_t>() % (w - crop + 1);
    bool hflip = draws[2].item<int64_t>() % 2;
    bool vflip = draws[3].item<int64_t>() % 2;
    int64_t rot = draws[4].item<int64_t>() % 4;
    auto apply = [&](const torch::Tensor& img) {
        auto t = img.slice(1, y0, y0 + crop).slice(2, x0, x0 + crop);
        if (hflip) t = t.flip(2);
        if (vflip) t = t.flip(1);
        if (rot) t = torch::rot90(t, rot, {1, 2});
        return t.contiguous();
    };
    return {apply(pair.hazy), apply(pair.clear), pair.domain_id};
}

} // namespace

Batch sample_batch(const std::vector<datagen::DomainSpec>& domains, const TrainConfig& config,
                   const datagen::ClearSource& source, torch::Generator& gen) {
    const auto n = config.num_tasks;
    const auto i_count = static_cast<int64_t>(domains.size());
    TORCH_CHECK(i_count >= 1, "sample_batch: no domains");

    std::vector<int64_t> task_domains;
    if (config.dcr_enabled) {
        TORCH_CHECK(i_count >= 2, "sample_batch: DCR needs at least 2 domains");
        TORCH_CHECK(n >= 3, "sample_batch: DCR needs N >= 3");
        auto pair_domain = torch::randint(i_count, {1}, gen).item<int64_t>();
        task_domains = {pair_domain, pair_domain};
        auto perm = torch::randperm(i_count, gen);
        std::vector<int64_t> others;
        for (int64_t i = 0; i < i_count; ++i) {
            auto d = perm[i].item<int64_t>();
            if (d != pair_domain) others.push_back(d);
        }
        for (int i = 0; i + 2 < n; ++i) {
            task_domains.push_back(others[static_cast<size_t>(i) % others.size()]);
        }
    } else {
        for (int i = 0; i < n; ++i) {
            task_domains.push_back(torch::randint(i_count, {1}, gen).item<int64_t>());
        }
    }

    Batch batch;
    for (auto di : task_domains) {
        auto task = datagen::make_task(domains[static_cast<size_t>(di)], source,
                                       config.samples_per_task, gen);
        for (auto& pair : task.pairs) {
            pair = augment_pair(pair, config.crop_size, gen);
        }
        batch.tasks.push_back(std::move(task));
    }
    return batch;
}

aggregate::TaskParam aggregate_prelims(const torch::Tensor& prelims, const TrainConfig& config) {
    if (config.aggregator == AggregatorKind::Average) {
        return aggregate::average_aggregate(prelims);
    }
    return aggregate::distance_aware_aggregate(prelims, config.distance_reduction);
}

Trainer::Trainer(TrainConfig config, std::vector<datagen::DomainSpec> domains)
    : config_(std::move(config)), domains_(std::move(domains)) {
    config_.validate(domains_.size());
    if (config_.dcr_enabled && config_.num_tasks < 3) {
        std::cerr << "warning: DCR needs N >= 3 tasks per batch; disabling DCR for N="
                  << config_.num_tasks << "\n";
        config_.dcr_enabled = false;
    }
    if (config_.deterministic) {
        torch::set_num_threads(1);
    }
    models_ = ModelBundle::create(config_, static_cast<int>(domains_.size()));
    optimizer_ = std::make_unique<torch::optim::Adam>(
        models_.trainable_parameters(),
        torch::optim::AdamOptions(config_.learning_rate)
            .betas({config_.adam_beta1, config_.adam_beta2}));
    data_gen_ = at::detail::createCPUGenerator(config_.seed ^ 0x9E3779B97F4A7C15ull);
}

Batch Trainer::next_batch(const datagen::ClearSource& source) {
    return sample_batch(domains_, config_, source, data_gen_);
}

losses::LossBreakdown Trainer::train_step(const Batch& batch) {
    models_.train(true);
    auto domain_index = [&](int id) {
        for (size_t i = 0; i < domains_.size(); ++i) {
            if (domains_[i].id == id) return static_cast<int64_t>(i);
        }
        throw ConfigError("train_step: task domain id not in configured domains");
    };

    std::vector<torch::Tensor> phis;
    std::vector<int> phi_domains;
    std::vector<int64_t> phi_labels;
    std::vector<torch::Tensor> preds, targets, hazys;

    for (const auto& task : batch.tasks) {
        std::vector<torch::Tensor> h, c;
        for (const auto& p : task.pairs) {
            h.push_back(p.hazy);
            c.push_back(p.clear);
        }
        auto hazy = torch::stack(h);
        auto clear = torch::stack(c);
        std::optional<torch::Tensor> phi;
        if (config_.conditioning_enabled) {
            auto prelims = models_.adapt_net->forward(hazy);
            auto tp = aggregate_prelims(prelims, config_);
            phi = tp.features;
            phis.push_back(tp.features);
            phi_domains.push_back(task.domain_id);
            phi_labels.push_back(domain_index(task.domain_id));
        }
        preds.push_back(models_.dehaze_net->forward(hazy, phi));
        targets.push_back(clear);
        hazys.push_back(hazy);
    }

    auto pred = torch::cat(preds);
    auto target = torch::cat(targets);
    auto hazy = torch::cat(hazys);

    auto pixel = losses::pixel_loss(pred, target);
    auto ssim = losses::ssim_loss(pred, target);
    auto cr = losses::cr_loss(pred, target, hazy, models_.extractor);

    auto zero = torch::zeros({}, pred.options());
    auto ce = zero;
    auto dcr_term = zero;
    if (config_.conditioning_enabled) {
        auto probs = models_.classifier->forward(torch::stack(phis));
        auto labels = torch::tensor(phi_labels, torch::kLong);
        ce = losses::ce_loss(probs, labels);
        if (config_.dcr_enabled) {
            auto confidences = probs.gather(1, labels.view({-1, 1})).squeeze(1).detach();
            auto sel = dcr::select_positive(phi_domains, confidences);
            dcr_term = dcr::dcr_loss(sel, phis, config_.dcr_options);
        }
    }

    auto total = losses::total_loss(pixel, ssim, cr, ce, dcr_term, config_.loss_weights);
    optimizer_->zero_grad();
    total.value.backward();
    optimizer_->step();
    ++step_;
    return total.breakdown;
}

std::filesystem::path Trainer::fit(const datagen::ClearSource& source,
                                   const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    auto final_path = out_dir / "checkpoint_final.pt";
    if (config_.max_steps == 0) {
        save_checkpoint(final_path);
        return final_path;
    }
    std::ofstream metrics(out_dir / "metrics.jsonl");
    if (!metrics) throw IoError("fit: cannot open metrics file in " + out_dir.string());
    for (int64_t s = 0; s < config_.max_steps; ++s) {
        auto batch = next_batch(source);
        auto bd = train_step(batch);
        json line = {{"step", step_},   {"pixel", bd.pixel}, {"ssim", bd.ssim}, {"cr", bd.cr},
                     {"ce", bd.ce},     {"dcr", bd.dcr},     {"total", bd.total}};
        metrics << line.dump() << "\n";
        if (config_.checkpoint_every > 0 && step_ % config_.checkpoint_every == 0) {
            save_checkpoint(out_dir / ("checkpoint_" + std::to_string(step_) + ".pt"));
        }
    }
    metrics.flush();
    save_checkpoint(final_path);
    return final_path;
}

void Trainer::save_checkpoint(const std::filesystem::path& file) const {
    torch::serialize::OutputArchive ar;
    models_.save(ar);
    ar.write("step", torch::tensor(step_));
    ar.write("rng_state", data_gen_.get_state());
    torch::serialize::OutputArchive opt;
    optimizer_->save(opt);
    ar.write("optimizer", opt);
    ar.save_to(file.string());
}

void Trainer::load_checkpoint(const std::filesystem::path& file) {
    torch::serialize::InputArchive ar;
    try {
        ar.load_from(file.string());
    } catch (const c10::Error& e) {
        throw IoError("load_checkpoint: cannot read " + file.string() + ": " + e.what_without_backtrace());
    }
    models_ = ModelBundle::load(ar);
    config_ = models_.config;
    optimizer_ = std::make_unique<torch::optim::Adam>(
        models_.trainable_parameters(),
        torch::optim::AdamOptions(config_.learning_rate)
            .betas({config_.adam_beta1, config_.adam_beta2}));
    torch::serialize::InputArchive opt;
    ar.read("optimizer", opt);
    optimizer_->load(opt);
    torch::Tensor step;
    ar.read("step", step);
    step_ = step.item<int64_t>();
    torch::Tensor rng;
    ar.read("rng_state", rng);
    data_gen_.set_state(rng);
}

Session::Session(const std::filesystem::path& checkpoint)
    : models_([&] {
          torch::serialize::InputArchive ar;
          try {
              ar.load_from(checkpoint.string());
          } catch (const c10::Error& e) {
              throw IoError("Session: cannot read " + checkpoint.string() + ": " +
                            e.what_without_backtrace());
          }
          return ModelBundle::load(ar);
      }()) {
    models_.train(false);
}

Session::Session(ModelBundle models) : models_(std::move(models)) { models_.train(false); }

torch::Tensor Session::infer(const torch::Tensor& hazy,
                             const std::vector<torch::Tensor>& context) const {
    torch::NoGradGuard no_grad;
    models_.train(false);
    datagen::check_image(hazy, "infer input");

    std::optional<torch::Tensor> phi;
    if (models_.config.conditioning_enabled) {
        std::vector<torch::Tensor> imgs{hazy};
        for (const auto& c : context) {
            auto img = c;
            if (img.sizes() != hazy.sizes()) {
                std::cerr << "warning: resizing context image to match input\n";
                img = torch::nn::functional::interpolate(
                          img.unsqueeze(0), torch::nn::functional::InterpolateFuncOptions()
                                                .size(std::vector<int64_t>{hazy.size(1),
                                                                           hazy.size(2)})
                                                .mode(torch::kBilinear)
                                                .align_corners(false))
                          .squeeze(0)
                          .clamp(0.0, 1.0);
            }
            imgs.push_back(img);
        }
        auto prelims = adapt::encode_preliminary(models_.adapt_net, torch::stack(imgs));
        phi = aggregate_prelims(prelims, models_.config).features;
    }
    return backbone::dehaze(models_.dehaze_net, hazy, phi);
}

} // namespace hazemeta::trainer
