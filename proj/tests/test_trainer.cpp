#include <filesystem>
#include <fstream>
#include <map>

#include "hazemeta/config.hpp"
#include "hazemeta/errors.hpp"
#include "hazemeta/trainer.hpp"

// doctest last: libtorch headers define a conflicting CHECK macro
#undef CHECK
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

using namespace hazemeta;
using namespace hazemeta::trainer;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.crop_size = 32;
    cfg.max_steps = 3;
    cfg.deterministic = true;
    return cfg;
}

std::vector<datagen::DomainSpec> two_domains() {
    return config::default_config().domains;
}

datagen::ClearSource tiny_source(const TrainConfig& cfg) {
    datagen::GenConfig g;
    g.height = cfg.crop_size + 16;
    g.width = cfg.crop_size + 16;
    return datagen::ClearSource(g);
}

} // namespace

TEST_CASE("sample_batch honors the DCR pairing constraint") {
    auto cfg = tiny_config();
    auto domains = two_domains();
    auto source = tiny_source(cfg);
    auto gen = at::detail::createCPUGenerator(1);

    for (int trial = 0; trial < 50; ++trial) {
        auto batch = sample_batch(domains, cfg, source, gen);
        REQUIRE(batch.tasks.size() == 3);
        std::map<int, int> counts;
        for (const auto& t : batch.tasks) {
            CHECK(t.pairs.size() == 4);
            counts[t.domain_id]++;
        }
        int pairs = 0, singles = 0;
        for (auto [dom, n] : counts) {
            if (n == 2) pairs++;
            else if (n == 1) singles++;
        }
        CHECK(pairs == 1);
        CHECK(singles >= 1);
    }
}

TEST_CASE("sample_batch without DCR draws unconstrained") {
    auto cfg = tiny_config();
    cfg.dcr_enabled = false;
    cfg.num_tasks = 2;
    auto source = tiny_source(cfg);
    auto gen = at::detail::createCPUGenerator(2);
    auto batch = sample_batch(two_domains(), cfg, source, gen);
    CHECK(batch.tasks.size() == 2);
}

TEST_CASE("sample_batch is deterministic given rng state") {
    auto cfg = tiny_config();
    auto source = tiny_source(cfg);
    auto g1 = at::detail::createCPUGenerator(5);
    auto g2 = at::detail::createCPUGenerator(5);
    auto b1 = sample_batch(two_domains(), cfg, source, g1);
    auto b2 = sample_batch(two_domains(), cfg, source, g2);
    REQUIRE(b1.tasks.size() == b2.tasks.size());
    for (size_t i = 0; i < b1.tasks.size(); ++i) {
        CHECK(b1.tasks[i].domain_id == b2.tasks[i].domain_id);
        CHECK(b1.tasks[i].pairs[0].hazy.equal(b2.tasks[i].pairs[0].hazy));
    }
}

TEST_CASE("cycling covers N-2 > I-1") {
    auto cfg = tiny_config();
    cfg.num_tasks = 5; // 3 singles from only 1 other domain
    auto source = tiny_source(cfg);
    auto gen = at::detail::createCPUGenerator(3);
    auto batch = sample_batch(two_domains(), cfg, source, gen);
    CHECK(batch.tasks.size() == 5);
}

TEST_CASE("config validation") {
    auto cfg = tiny_config();
    cfg.samples_per_task = 0;
    CHECK_THROWS_AS(cfg.validate(2), ConfigError);

    cfg = tiny_config();
    cfg.learning_rate = 0;
    CHECK_THROWS_AS(cfg.validate(2), ConfigError);

    cfg = tiny_config();
    CHECK_THROWS_AS(cfg.validate(1), ConfigError); // DCR with one domain

    cfg = tiny_config();
    cfg.num_tasks = 2; // DCR auto-disabled with a warning
    Trainer tr(cfg, two_domains());
    auto bd = tr.train_step(tr.next_batch(tiny_source(cfg)));
    CHECK(bd.dcr == 0.0);
}

TEST_CASE("train_step produces finite losses and updates weights") {
    auto cfg = tiny_config();
    Trainer tr(cfg, two_domains());
    auto source = tiny_source(cfg);

    auto before_adapt = tr.models().adapt_net->parameters()[0].clone();
    auto before_backbone = tr.models().dehaze_net->parameters()[0].clone();

    auto bd = tr.train_step(tr.next_batch(source));
    CHECK(std::isfinite(bd.total));
    CHECK(bd.pixel >= 0);
    CHECK(tr.step() == 1);

    // Gradient flows into both the adaptation and the dehazing network.
    CHECK_FALSE(tr.models().adapt_net->parameters()[0].equal(before_adapt));
    CHECK_FALSE(tr.models().dehaze_net->parameters()[0].equal(before_backbone));
}

TEST_CASE("breakdown identity holds each step") {
    auto cfg = tiny_config();
    Trainer tr(cfg, two_domains());
    auto source = tiny_source(cfg);
    const auto& w = cfg.loss_weights;
    for (int i = 0; i < 3; ++i) {
        auto bd = tr.train_step(tr.next_batch(source));
        auto expect = bd.pixel + w.lambda1 * bd.ssim + w.lambda2 * bd.cr + w.lambda3 * bd.ce +
                      w.lambda4 * bd.dcr;
        CHECK(bd.total == doctest::Approx(expect).epsilon(1e-6));
    }
}

TEST_CASE("dcr disabled zeroes the dcr component") {
    auto cfg = tiny_config();
    cfg.dcr_enabled = false;
    Trainer tr(cfg, two_domains());
    auto bd = tr.train_step(tr.next_batch(tiny_source(cfg)));
    CHECK(bd.dcr == 0.0);
}

TEST_CASE("repeated steps on a constant batch reduce pixel loss") {
    int improved = 0;
    for (uint64_t seed = 0; seed < 10; ++seed) {
        auto cfg = tiny_config();
        cfg.seed = seed;
        Trainer tr(cfg, two_domains());
        auto batch = tr.next_batch(tiny_source(cfg));
        auto bd1 = tr.train_step(batch);
        auto bd2 = tr.train_step(batch);
        if (bd2.pixel <= bd1.pixel) improved++;
    }
    CHECK(improved >= 8);
}

TEST_CASE("fit writes metrics and checkpoints") {
    auto dir = fs::temp_directory_path() / "hazemeta_fit_test";
    fs::remove_all(dir);
    auto cfg = tiny_config();
    cfg.max_steps = 4;
    cfg.checkpoint_every = 2;
    Trainer tr(cfg, two_domains());
    auto ckpt = tr.fit(tiny_source(cfg), dir);
    CHECK(fs::exists(ckpt));
    CHECK(fs::exists(dir / "checkpoint_2.pt"));
    CHECK(fs::exists(dir / "metrics.jsonl"));
    std::ifstream metrics(dir / "metrics.jsonl");
    int lines = 0;
    for (std::string l; std::getline(metrics, l);) ++lines;
    CHECK(lines == 4);
    fs::remove_all(dir);
}

TEST_CASE("max_steps=0 writes the initial checkpoint only") {
    auto dir = fs::temp_directory_path() / "hazemeta_fit0_test";
    fs::remove_all(dir);
    auto cfg = tiny_config();
    cfg.max_steps = 0;
    Trainer tr(cfg, two_domains());
    auto ckpt = tr.fit(tiny_source(cfg), dir);
    CHECK(fs::exists(ckpt));
    CHECK_FALSE(fs::exists(dir / "metrics.jsonl"));
    fs::remove_all(dir);
}

TEST_CASE("checkpoint resume reproduces the next step") {
    auto dir = fs::temp_directory_path() / "hazemeta_resume_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto cfg = tiny_config();
    auto source = tiny_source(cfg);

    Trainer tr(cfg, two_domains());
    tr.train_step(tr.next_batch(source));
    tr.save_checkpoint(dir / "mid.pt");
    auto bd_expected = tr.train_step(tr.next_batch(source));

    Trainer resumed(cfg, two_domains());
    resumed.load_checkpoint(dir / "mid.pt");
    CHECK(resumed.step() == 1);
    auto bd_resumed = resumed.train_step(resumed.next_batch(source));

    CHECK(bd_resumed.total == doctest::Approx(bd_expected.total).epsilon(1e-12));
    CHECK(bd_resumed.pixel == doctest::Approx(bd_expected.pixel).epsilon(1e-12));
    fs::remove_all(dir);
}

TEST_CASE("checkpoint round-trip gives bitwise-identical forward outputs") {
    auto dir = fs::temp_directory_path() / "hazemeta_ckpt_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto cfg = tiny_config();
    Trainer tr(cfg, two_domains());
    tr.train_step(tr.next_batch(tiny_source(cfg)));
    tr.save_checkpoint(dir / "ck.pt");

    auto probe_gen = at::detail::createCPUGenerator(77);
    auto probe = torch::rand({3, 32, 32}, probe_gen);

    Session s1(dir / "ck.pt");
    Session s2(dir / "ck.pt");
    CHECK(s1.infer(probe).equal(s2.infer(probe)));

    tr.models().train(false);
    Session s3(std::move(tr.models()));
    CHECK(s1.infer(probe).equal(s3.infer(probe)));
    fs::remove_all(dir);
}

TEST_CASE("infer contract") {
    auto cfg = tiny_config();
    Trainer tr(cfg, two_domains());
    tr.models().train(false);
    Session session(std::move(tr.models()));

    auto gen = at::detail::createCPUGenerator(13);
    auto hazy = torch::rand({3, 32, 32}, gen);

    SUBCASE("no context equals duplicated-input context") {
        auto plain = session.infer(hazy);
        auto dup = session.infer(hazy, {hazy, hazy, hazy});
        CHECK((plain - dup).abs().max().item<double>() < 1e-6);
    }
    SUBCASE("no gradients are computed") {
        auto y = session.infer(hazy);
        CHECK_FALSE(y.requires_grad());
        for (const auto& p : session.models().adapt_net->parameters()) {
            CHECK_FALSE(p.grad().defined());
        }
    }
    SUBCASE("mismatched context is resized") {
        auto small = torch::rand({3, 16, 16}, gen);
        auto y = session.infer(hazy, {small});
        CHECK(y.sizes() == hazy.sizes());
    }
}

TEST_CASE("corrupt checkpoint raises IoError") {
    auto file = fs::temp_directory_path() / "hazemeta_bad.pt";
    std::ofstream(file) << "garbage";
    CHECK_THROWS_AS(Session{file}, IoError);
    fs::remove(file);
}
