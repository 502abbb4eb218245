#include "hazemeta/dcr.hpp"
#include "hazemeta/gradcheck.hpp"

// doctest last: libtorch headers define a conflicting CHECK macro
#undef CHECK
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

using namespace hazemeta::dcr;

TEST_CASE("contextual similarity rows are stochastic") {
    auto gen = at::detail::createCPUGenerator(1);
    auto a = torch::randn({6, 4, 4}, gen);
    auto b = torch::randn({6, 4, 4}, gen);
    auto sim = contextual_similarity(a, b);
    CHECK(sim.sizes() == torch::IntArrayRef({6, 6}));
    CHECK((sim >= 0).all().item<bool>());
    CHECK((sim <= 1).all().item<bool>());
    CHECK(sim.sum(1).allclose(torch::ones({6}), 1e-5, 1e-5));
}

TEST_CASE("self similarity is identity dominant") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        auto gen = at::detail::createCPUGenerator(seed);
        // Well-separated random channels.
        auto phi = torch::randn({8, 5, 5}, gen) * 3.0;
        ContextualOptions opts;
        opts.bandwidth = 0.1;
        auto sim = contextual_similarity(phi, phi, opts);
        auto argmax = sim.argmax(1);
        CHECK(argmax.equal(torch::arange(8)));
    }
}

TEST_CASE("huge bandwidth gives uniform rows and log(V) loss") {
    auto gen = at::detail::createCPUGenerator(4);
    auto a = torch::randn({7, 3, 3}, gen);
    auto b = torch::randn({7, 3, 3}, gen);
    ContextualOptions opts;
    opts.bandwidth = 1e9;
    auto sim = contextual_similarity(a, b, opts);
    CHECK(sim.allclose(torch::full({7, 7}, 1.0 / 7), 1e-5, 1e-5));
    CHECK(contextual_loss(a, b, opts).item<double>() ==
          doctest::Approx(std::log(7.0)).epsilon(1e-5));
}

TEST_CASE("contextual loss separates self from random") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        auto gen = at::detail::createCPUGenerator(40 + seed);
        auto phi = torch::randn({8, 5, 5}, gen) * 3.0;
        auto other = torch::randn({8, 5, 5}, gen) * 3.0;
        ContextualOptions opts;
        opts.bandwidth = 0.1;
        auto self_loss = contextual_loss(phi, phi, opts).item<double>();
        auto cross_loss = contextual_loss(phi, other, opts).item<double>();
        CHECK(self_loss < 0.05);
        CHECK(self_loss < cross_loss);
    }
}

TEST_CASE("contextual loss is nonnegative") {
    for (uint64_t seed = 0; seed < 20; ++seed) {
        auto gen = at::detail::createCPUGenerator(seed);
        auto a = torch::randn({5, 4, 4}, gen);
        auto b = torch::randn({5, 4, 4}, gen);
        CHECK(contextual_loss(a, b).item<double>() >= 0.0);
    }
    // Degenerate zero-variance features do not divide by zero.
    auto flat_a = torch::zeros({4, 3, 3});
    auto flat_b = torch::zeros({4, 3, 3});
    CHECK(std::isfinite(contextual_loss(flat_a, flat_b).item<double>()));
}

TEST_CASE("domain classifier") {
    DomainClassifier clf(8, 3);
    auto phi = torch::rand({5, 8, 6, 6});
    auto probs = clf(phi);
    CHECK(probs.sizes() == torch::IntArrayRef({5, 3}));
    CHECK(probs.sum(1).allclose(torch::ones({5}), 1e-6, 1e-6));

    SUBCASE("zero weights give uniform probabilities") {
        torch::NoGradGuard ng;
        for (auto& p : clf->parameters()) p.zero_();
        CHECK(clf(phi).allclose(torch::full({5, 3}, 1.0 / 3), 1e-6, 1e-6));
    }
}

TEST_CASE("select_positive rule") {
    SUBCASE("higher confidence becomes positive") {
        auto sel = select_positive({0, 0, 1}, torch::tensor({0.9, 0.6, 0.5}));
        CHECK(sel.positive_index == 0);
        CHECK(sel.anchor_index == 1);
        CHECK(sel.negative_indices == std::vector<int64_t>{2});
    }
    SUBCASE("ties pick the lower index as positive") {
        auto sel = select_positive({0, 0, 1}, torch::tensor({0.7, 0.7, 0.2}));
        CHECK(sel.positive_index == 0);
        CHECK(sel.anchor_index == 1);
    }
    SUBCASE("negatives gather all other domains") {
        auto sel = select_positive({0, 0, 1, 2}, torch::tensor({0.5, 0.8, 0.3, 0.4}));
        CHECK((sel.negative_indices == std::vector<int64_t>{2, 3}));
    }
    SUBCASE("confidence rescaling does not change the selection") {
        auto conf = torch::tensor({0.5, 0.8, 0.3});
        auto s1 = select_positive({0, 0, 1}, conf);
        auto s2 = select_positive({0, 0, 1}, conf * 17.5);
        CHECK(s1.anchor_index == s2.anchor_index);
        CHECK(s1.positive_index == s2.positive_index);
    }
    SUBCASE("missing same-domain pair errors") {
        CHECK_THROWS(select_positive({0, 1, 2}, torch::tensor({0.1, 0.2, 0.3})));
    }
}

TEST_CASE("dcr loss bounds and hand values") {
    auto gen = at::detail::createCPUGenerator(2);
    ContrastSelection sel;
    sel.anchor_index = 0;
    sel.positive_index = 1;
    sel.negative_indices = {2};

    SUBCASE("zero numerator gives zero loss") {
        // Anchor equals positive: self contextual loss with small bandwidth
        // is near zero, so the ratio collapses.
        auto phi = torch::randn({8, 5, 5}, gen) * 3.0;
        auto neg = torch::randn({8, 5, 5}, gen);
        DcrOptions opts;
        opts.contextual.bandwidth = 0.05;
        auto v = dcr_loss(sel, {phi, phi.clone(), neg}, opts).item<double>();
        CHECK(v >= 0.0);
        CHECK(v < 0.05);
    }
    SUBCASE("in [0,1] for random batches") {
        for (uint64_t seed = 0; seed < 50; ++seed) {
            auto g = at::detail::createCPUGenerator(seed);
            std::vector<torch::Tensor> params = {torch::randn({6, 4, 4}, g),
                                                 torch::randn({6, 4, 4}, g),
                                                 torch::randn({6, 4, 4}, g)};
            auto v = dcr_loss(sel, params).item<double>();
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
    SUBCASE("positive is gradient-detached, negatives are not") {
        auto anchor = torch::randn({6, 4, 4}, gen).requires_grad_(true);
        auto pos = torch::randn({6, 4, 4}, gen).requires_grad_(true);
        auto neg = torch::randn({6, 4, 4}, gen).requires_grad_(true);
        dcr_loss(sel, {anchor, pos, neg}).backward();
        CHECK(anchor.grad().defined());
        CHECK_FALSE(pos.grad().defined());
        CHECK(neg.grad().defined());
    }
}

TEST_CASE("equal contextual losses give ratio near one half") {
    // All-equal L_cx = c with one negative: c / (2c + sigma) ~= 0.5.
    // Identical tensors make every pairwise contextual loss equal.
    auto gen = at::detail::createCPUGenerator(3);
    auto phi = torch::randn({6, 4, 4}, gen);
    ContrastSelection sel;
    sel.anchor_index = 0;
    sel.positive_index = 1;
    sel.negative_indices = {2};
    DcrOptions opts;
    opts.contextual.bandwidth = 1e9; // forces L_cx = log(V) for every pair
    auto v = dcr_loss(sel, {phi, phi + 1.0, phi - 1.0}, opts).item<double>();
    CHECK(v == doctest::Approx(0.5).epsilon(1e-5));
}

TEST_CASE("gradient check on toy shapes") {
    auto gen = at::detail::createCPUGenerator(8);
    auto pos = torch::randn({4, 3, 3}, gen, torch::kFloat64);
    auto neg = torch::randn({4, 3, 3}, gen, torch::kFloat64);
    auto anchor = torch::randn({4, 3, 3}, gen, torch::kFloat64);

    auto r = hazemeta::gradcheck::check(
        "dcr",
        [&](const torch::Tensor& x) {
            ContrastSelection sel;
            sel.anchor_index = 0;
            sel.positive_index = 1;
            sel.negative_indices = {2};
            return dcr_loss(sel, {x, pos, neg});
        },
        anchor);
    CHECK(r.passed);
}
