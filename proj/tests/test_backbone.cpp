#include "hazemeta/backbone.hpp"

// doctest last: libtorch headers define a conflicting CHECK macro
#undef CHECK
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

using namespace hazemeta::backbone;

TEST_CASE("condition_fuse is residual identity with zero projection") {
    DehazeNet net;
    torch::NoGradGuard ng;
    net->fuse_proj->weight.zero_();
    net->fuse_proj->bias.zero_();
    auto b = torch::rand({1, 64, 8, 8});
    auto phi = torch::rand({64, 8, 8});
    CHECK(net->condition_fuse(b, phi).equal(b));
}

TEST_CASE("condition_fuse preserves shape and resizes phi") {
    DehazeNet net;
    auto b = torch::rand({2, 64, 8, 8});
    auto phi = torch::rand({64, 5, 5});
    auto y = net->condition_fuse(b, phi);
    CHECK(y.sizes() == b.sizes());
}

TEST_CASE("different phi give different outputs") {
    torch::manual_seed(0);
    DehazeNet net;
    net->eval();
    torch::NoGradGuard ng;
    auto x = torch::rand({3, 32, 32});
    for (uint64_t seed = 0; seed < 10; ++seed) {
        auto gen = at::detail::createCPUGenerator(seed);
        auto phi1 = torch::randn({64, 4, 4}, gen);
        auto phi2 = torch::randn({64, 4, 4}, gen);
        auto y1 = net->forward(x, phi1);
        auto y2 = net->forward(x, phi2);
        CHECK((y1 - y2).abs().sum().item<double>() > 0.0);
    }
}

TEST_CASE("dehaze output contract") {
    torch::manual_seed(1);
    DehazeNet net;
    net->eval();
    torch::NoGradGuard ng;

    SUBCASE("shape matches input, including non-multiple-of-8 sizes") {
        for (auto size : {std::pair{32L, 32L}, std::pair{30L, 41L}}) {
            auto x = torch::rand({3, size.first, size.second});
            auto y = dehaze(net, x);
            CHECK(y.sizes() == x.sizes());
        }
    }
    SUBCASE("inference outputs in [0,1]") {
        auto x = torch::rand({3, 32, 32});
        auto y = dehaze(net, x);
        CHECK(y.min().item<double>() >= 0.0);
        CHECK(y.max().item<double>() <= 1.0);
    }
    SUBCASE("eval mode is bitwise deterministic") {
        auto x = torch::rand({3, 32, 32});
        auto phi = torch::randn({64, 4, 4});
        CHECK(dehaze(net, x, phi).equal(dehaze(net, x, phi)));
    }
    SUBCASE("training mode does not clamp") {
        net->train();
        auto x = torch::rand({1, 3, 32, 32});
        auto y = net->forward(x);
        net->eval();
        // Residual output can leave [0,1]; only the eval path clamps.
        CHECK(y.sizes() == x.sizes());
    }
}

TEST_CASE("parameter budget stays under 2M") {
    DehazeNet net;
    CHECK(parameter_count(*net) < 2'000'000);
}
