#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "hazemeta/config.hpp"
#include "hazemeta/errors.hpp"
#include "hazemeta/evaluate.hpp"
#include "hazemeta/gradcheck.hpp"
#include "hazemeta/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hazemeta;

namespace {

struct CommonArgs {
    std::string config_file;
    std::string workdir = ".";
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_file, "JSON config file");
    cmd->add_option("--workdir", args.workdir, "base directory for inputs/outputs");
    cmd->add_option("--set", args.overrides, "config override, section.key=value")
        ->take_all();
    cmd->allow_extras(); // bare --section.key=value flags mirror config keys
}

config::RunConfig resolve(const CLI::App* cmd, CommonArgs& args) {
    // Leftover args of the form --section.key=value are treated as overrides.
    for (const auto& extra : cmd->remaining()) {
        std::string s = extra;
        if (s.rfind("--", 0) == 0) s = s.substr(2);
        if (s.find('=') == std::string::npos || s.find('.') == std::string::npos) {
            throw ConfigError("unrecognized argument '" + extra + "'");
        }
        args.overrides.push_back(s);
    }
    fs::path cfg_path = args.config_file;
    if (!args.config_file.empty() && cfg_path.is_relative()) {
        cfg_path = fs::path(args.workdir) / cfg_path;
    }
    auto cfg = config::parse_config(args.config_file.empty() ? fs::path{} : cfg_path,
                                    args.overrides);
    std::cout << cfg.to_json() << "\n";
    return cfg;
}

fs::path in_workdir(const CommonArgs& args, const std::string& p) {
    fs::path path = p;
    return path.is_absolute() ? path : fs::path(args.workdir) / path;
}

int cmd_synth_data(CommonArgs& args, const CLI::App* cmd, const std::string& out,
                   int per_domain) {
    auto cfg = resolve(cmd, args);
    auto out_dir = in_workdir(args, out);
    fs::create_directories(out_dir / "hazy");
    fs::create_directories(out_dir / "clear");
    config::save_resolved(cfg, out_dir);

    datagen::GenConfig gcfg;
    gcfg.height = cfg.train.crop_size;
    gcfg.width = cfg.train.crop_size;
    datagen::ClearSource source(gcfg);

    std::ofstream manifest(out_dir / "manifest.jsonl");
    if (!manifest) throw IoError("cannot write manifest in " + out_dir.string());
    auto all_domains = cfg.domains;
    all_domains.insert(all_domains.end(), cfg.heldout.begin(), cfg.heldout.end());
    for (const auto& domain : all_domains) {
        auto gen = at::detail::createCPUGenerator(domain.rng_seed);
        for (int i = 0; i < per_domain; ++i) {
            auto task = datagen::make_task(domain, source, 1, gen);
            const auto& pair = task.pairs.front();
            auto name = "d" + std::to_string(domain.id) + "_" + std::to_string(i) + ".png";
            datagen::save_image(pair.hazy, out_dir / "hazy" / name);
            datagen::save_image(pair.clear, out_dir / "clear" / name);
            json line = {{"hazy_path", "hazy/" + name},
                         {"clear_path", "clear/" + name},
                         {"domain_id", domain.id}};
            manifest << line.dump() << "\n";
        }
    }
    std::cout << "wrote " << per_domain << " pairs per domain to " << out_dir << "\n";
    return 0;
}

int cmd_train(CommonArgs& args, const CLI::App* cmd, const std::string& out) {
    auto cfg = resolve(cmd, args);
    auto out_dir = in_workdir(args, out);
    config::save_resolved(cfg, out_dir);
    trainer::Trainer tr(cfg.train, cfg.domains);
    datagen::GenConfig gcfg;
    gcfg.height = cfg.train.crop_size + 16;
    gcfg.width = cfg.train.crop_size + 16;
    auto ckpt = tr.fit(datagen::ClearSource(gcfg), out_dir);
    std::cout << "final checkpoint: " << ckpt << "\n";
    return 0;
}

int cmd_eval(CommonArgs& args, const CLI::App* cmd, const std::string& checkpoint,
             const std::string& out) {
    auto cfg = resolve(cmd, args);
    auto out_dir = in_workdir(args, out);
    config::save_resolved(cfg, out_dir);
    auto domains = cfg.heldout.empty() ? cfg.domains : cfg.heldout;
    auto report = evaluate::evaluate_checkpoint(in_workdir(args, checkpoint), domains, cfg.eval);
    std::ofstream(out_dir / "report.json") << report.to_json() << "\n";
    std::ofstream(out_dir / "report.csv") << report.to_csv();
    std::cout << report.to_json() << "\n";
    return 0;
}

int cmd_ablate(CommonArgs& args, const CLI::App* cmd, const std::string& out) {
    auto cfg = resolve(cmd, args);
    auto out_dir = in_workdir(args, out);
    config::save_resolved(cfg, out_dir);
    evaluate::AblationOptions opts;
    opts.seeds = cfg.ablation_seeds;
    opts.eval = cfg.eval;
    auto rows = evaluate::run_ablation(cfg.train, cfg.domains, cfg.heldout, opts, out_dir);
    std::cout << evaluate::ablation_csv(rows);
    return 0;
}

int cmd_dehaze(CommonArgs& args, const std::string& checkpoint, const std::string& input,
               const std::string& output, const std::string& context_dir) {
    trainer::Session session(in_workdir(args, checkpoint));
    auto hazy = datagen::load_image(in_workdir(args, input));
    std::vector<torch::Tensor> context;
    if (!context_dir.empty()) {
        auto ingest = datagen::ingest_image_folder(in_workdir(args, context_dir),
                                                   datagen::PairingRule::HazyOnly);
        context = ingest.images;
    }
    auto restored = session.infer(hazy, context);
    datagen::save_image(restored, in_workdir(args, output));
    std::cout << "wrote " << in_workdir(args, output) << "\n";
    return 0;
}

int cmd_gradcheck() {
    auto results = gradcheck::run_suite();
    bool all_ok = true;
    for (const auto& r : results) {
        std::cout << (r.passed ? "PASS" : "FAIL") << "  " << r.name
                  << "  max_rel_error=" << r.max_rel_error << "\n";
        all_ok = all_ok && r.passed;
    }
    if (!all_ok) throw NumericError("gradient check failed");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"hazemeta: meta-learned domain-generalized dehazing toolkit"};
    app.require_subcommand(1);

    CommonArgs args;

    auto* synth = app.add_subcommand("synth-data", "synthesize multi-domain hazy/clear pairs");
    std::string synth_out = "data";
    int per_domain = 16;
    add_common(synth, args);
    synth->add_option("--out", synth_out, "output directory (relative to workdir)");
    synth->add_option("--per-domain", per_domain, "pairs per domain");

    auto* train = app.add_subcommand("train", "episodic meta-training");
    std::string train_out = "run";
    add_common(train, args);
    train->add_option("--out", train_out, "output directory (relative to workdir)");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on held-out domains");
    std::string eval_ckpt = "run/checkpoint_final.pt";
    std::string eval_out = "eval";
    add_common(eval, args);
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint file");
    eval->add_option("--out", eval_out, "output directory (relative to workdir)");

    auto* ablate = app.add_subcommand("ablate", "train and rank the ablation ladder");
    std::string ablate_out = "ablation";
    add_common(ablate, args);
    ablate->add_option("--out", ablate_out, "output directory (relative to workdir)");

    auto* dehaze = app.add_subcommand("dehaze", "restore a single hazy image");
    std::string dh_ckpt, dh_in, dh_out = "dehazed.png", dh_ctx;
    dehaze->add_option("--workdir", args.workdir, "base directory");
    dehaze->add_option("--checkpoint", dh_ckpt, "checkpoint file")->required();
    dehaze->add_option("--input", dh_in, "hazy input image")->required();
    dehaze->add_option("--output", dh_out, "output image path");
    dehaze->add_option("--context", dh_ctx, "directory of unlabeled hazy context images");

    auto* gradcheck_cmd = app.add_subcommand("gradcheck", "run the finite-difference suite");
    (void)gradcheck_cmd;

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth_data(args, synth, synth_out, per_domain);
        if (train->parsed()) return cmd_train(args, train, train_out);
        if (eval->parsed()) return cmd_eval(args, eval, eval_ckpt, eval_out);
        if (ablate->parsed()) return cmd_ablate(args, ablate, ablate_out);
        if (dehaze->parsed()) return cmd_dehaze(args, dh_ckpt, dh_in, dh_out, dh_ctx);
        if (gradcheck_cmd->parsed()) return cmd_gradcheck();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
