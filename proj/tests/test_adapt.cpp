#include "hazemeta/adapt.hpp"

// doctest last: libtorch headers define a conflicting CHECK macro
#undef CHECK
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

using namespace hazemeta::adapt;

TEST_CASE("context gate basics") {
    ContextGate gate(4, 8);
    auto x = torch::rand({2, 4, 8, 8});

    SUBCASE("zero weights give 0.5 gates") {
        torch::NoGradGuard ng;
        for (auto& p : gate->parameters()) p.zero_();
        CHECK(gate(x).allclose(torch::full({2, 8}, 0.5)));
    }
    SUBCASE("gates stay in [0,1], strictly inside for moderate inputs") {
        auto g = gate(x);
        CHECK((g > 0).all().item<bool>());
        CHECK((g < 1).all().item<bool>());
        // Extreme inputs may saturate to the closed bounds in float32.
        auto gs = gate(x * 100.0);
        CHECK((gs >= 0).all().item<bool>());
        CHECK((gs <= 1).all().item<bool>());
    }
    SUBCASE("constant MLP ignores input shifts") {
        torch::NoGradGuard ng;
        gate->fc1->weight.zero_();
        gate->fc1->bias.fill_(0.3);
        auto g1 = gate(x);
        auto g2 = gate(x + 0.7);
        CHECK(g1.equal(g2));
    }
}

TEST_CASE("cg conv block contracts") {
    CgConvBlock block(3, 8, /*context_gating=*/true);
    block->eval();

    SUBCASE("stride-2 output dims") {
        auto y = block(torch::rand({1, 3, 17, 24}));
        CHECK(y.size(2) == 9);  // ceil(17/2)
        CHECK(y.size(3) == 12);
    }
    SUBCASE("outputs nonnegative") {
        auto y = block(torch::randn({2, 3, 16, 16}));
        CHECK((y >= 0).all().item<bool>());
    }
    SUBCASE("saturated gate equals plain conv path") {
        torch::NoGradGuard ng;
        block->gate->fc2->bias.fill_(100.0); // sigmoid -> 1
        block->gate->fc2->weight.zero_();
        auto x = torch::rand({1, 3, 16, 16});
        auto gated = block(x);
        auto plain = torch::relu(block->bn(block->conv(x)));
        CHECK(gated.allclose(plain, 1e-6, 1e-6));
    }
    SUBCASE("tiny spatial input errors") {
        CHECK_THROWS(block(torch::rand({1, 3, 2, 2})));
    }
}

TEST_CASE("encode_preliminary shape and determinism") {
    AdaptNet net;
    net->eval();

    auto x = torch::rand({3, 240, 240});
    auto phi = encode_preliminary(net, x);
    CHECK(phi.sizes() == torch::IntArrayRef({64, 30, 30}));

    auto phi2 = encode_preliminary(net, x);
    CHECK(phi.equal(phi2)); // bitwise in eval mode

    CHECK_THROWS(net->forward(torch::full({1, 3, 16, 16}, std::nan(""))));
}

TEST_CASE("plain conv variant has no gates") {
    AdaptOptions opts;
    opts.context_gating = false;
    AdaptNet net(opts);
    for (const auto& name : net->named_parameters().keys()) {
        CHECK(name.find("gate") == std::string::npos);
    }
}

TEST_CASE("small perturbations give bounded output change") {
    AdaptNet net;
    net->eval();
    auto x = torch::rand({3, 16, 16});
    auto phi = encode_preliminary(net, x);
    const double eps = 1e-6;
    auto phi_eps = encode_preliminary(net, (x + eps).clamp(0, 1));
    // Empirical local Lipschitz bound; generous but finite.
    CHECK((phi_eps - phi).abs().max().item<double>() < 1e4 * eps);
}

TEST_CASE("weight gradients match finite differences") {
    torch::manual_seed(5);
    AdaptNet net;
    net->to(torch::kFloat64);
    net->eval(); // frozen BN statistics keep the probe a pure function

    auto gen = at::detail::createCPUGenerator(21);
    auto x = torch::rand({1, 3, 16, 16}, gen, torch::kFloat64);

    auto probe = [&]() { return net->forward(x).sum(); };

    net->zero_grad();
    probe().backward();

    const double eps = 1e-6;
    auto params = net->parameters();
    auto check_gen = at::detail::createCPUGenerator(99);
    for (auto& p : params) {
        auto flat = p.detach().view(-1);
        auto grad = p.grad().view(-1);
        // Sample a few coordinates per tensor; exhaustive checks are O(minutes).
        auto idxs = torch::randint(flat.numel(), {std::min<int64_t>(4, flat.numel())}, check_gen);
        for (int64_t i = 0; i < idxs.numel(); ++i) {
            auto j = idxs[i].item<int64_t>();
            double orig = flat[j].item<double>();
            {
                torch::NoGradGuard ng;
                flat[j] = orig + eps;
            }
            double up = probe().item<double>();
            {
                torch::NoGradGuard ng;
                flat[j] = orig - eps;
            }
            double down = probe().item<double>();
            {
                torch::NoGradGuard ng;
                flat[j] = orig;
            }
            double numeric = (up - down) / (2 * eps);
            double analytic = grad[j].item<double>();
            double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
            CHECK(std::abs(numeric - analytic) / denom < 1e-4);
        }
    }
}
