// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "blsim/config.hpp"

using namespace blsim;

namespace {

const char* kSmallNet = R"(
# three layers: conv, pool, conv
[options]
acc_bits = 24
cache_bytes = 1024
frac_bits = 5

[input]
dims = 8x8x2

[conv]
kernel = 3x3x2x4
leaky = 26/256
out_shift = 2

[maxpool]
size = 2
stride = 2

[conv]
kernel = 1x1x4x3
)";

const char* kRoutedNet = R"(
[input]
dims = 8x8x2

[conv]
kernel = 1x1x2x4

[conv]
kernel = 1x1x4x6

[route]
from = 0

[upsample]

[route]
from = 2, 1
)";

}  // namespace

TEST_CASE("parsing and dimension chaining") {
    auto cfg = NetworkConfig::parse(kSmallNet);
    CHECK(cfg.options.acc_bits == 24);
    CHECK(cfg.options.cache_bytes == 1024);
    CHECK(cfg.options.frac_bits == 5);
    REQUIRE(cfg.layers.size() == 3);
    CHECK(cfg.layers[0].kind == perf::LayerKind::Conv);
    CHECK(cfg.layers[0].k == 3);
    CHECK(cfg.layers[0].out_channels == 4);
    CHECK(cfg.layers[0].scale.out_shift == 2);
    CHECK(cfg.layers[1].kind == perf::LayerKind::Maxpool);

    auto dims = cfg.resolve_dims({8, 8, 2});
    CHECK(dims[0].z == 4);
    CHECK(dims[1].x == 4);
    CHECK(dims[1].y == 4);
    CHECK(dims[2].z == 3);
    CHECK(cfg.conv_count() == 2);
}

TEST_CASE("declared input dims are enforced") {
    auto cfg = NetworkConfig::parse(kSmallNet);
    CHECK_THROWS_AS(cfg.resolve_dims({9, 8, 2}), ConfigError);
}

TEST_CASE("mismatched chains are rejected before any computation") {
    const char* bad = R"(
[conv]
kernel = 3x3x2x4

[conv]
kernel = 3x3x8x4
)";
    auto cfg = NetworkConfig::parse(bad);
    CHECK_THROWS_AS(cfg.resolve_dims({8, 8, 2}), ConfigError);
}

TEST_CASE("routes concatenate and reference earlier layers only") {
    auto cfg = NetworkConfig::parse(kRoutedNet);
    auto dims = cfg.resolve_dims({8, 8, 2});
    CHECK(dims[2].z == 4);   // route from conv 0
    CHECK(dims[3].x == 16);  // upsample of the route
    CHECK(dims[4].z == 10);  // concat of the two conv outputs
    // concat of 16x16x4 and 8x8x6 must fail on extent
    CHECK_THROWS_AS([] {
        auto broken = NetworkConfig::parse(R"(
[conv]
kernel = 1x1x2x4

[upsample]

[route]
from = 1, 0
)");
        broken.resolve_dims({8, 8, 2});
    }(), ConfigError);

    CHECK_THROWS_AS(NetworkConfig::parse(R"(
[route]
from = 2
)"), ConfigError);
}

TEST_CASE("parse errors carry context") {
    CHECK_THROWS_AS(NetworkConfig::parse("[conv]\nkernel = 3x1x2x4\n"), ConfigError);
    CHECK_THROWS_AS(NetworkConfig::parse("[conv]\nbogus = 1\n"), ConfigError);
    CHECK_THROWS_AS(NetworkConfig::parse("[conv]\n"), ConfigError);  // missing kernel
    CHECK_THROWS_AS(NetworkConfig::parse("kernel = 3\n"), ConfigError);
    CHECK_THROWS_AS(NetworkConfig::parse("[maxpool]\nstride = 3\n"), ConfigError);
    CHECK_THROWS_AS(NetworkConfig::parse(""), ConfigError);
    CHECK_THROWS_AS(NetworkConfig::parse("[conv]\nkernel = 3x3x2x4\nleaky = 26/100\n"),
                    ConfigError);
}

TEST_CASE("layer specs mark fused pools and keep table shapes") {
    auto cfg = NetworkConfig::parse(kSmallNet);
    auto specs = cfg.layer_specs({8, 8, 2});
    REQUIRE(specs.size() == 3);
    CHECK(specs[0].fused_maxpool);
    CHECK(specs[0].output.x == 8);
    CHECK(specs[0].stored.x == 4);  // the pooled map is what goes to memory
    CHECK(specs[0].label == "3x3x2x4");
    CHECK(specs[1].label == "2x2/2");
    CHECK(!specs[2].fused_maxpool);
    CHECK(specs[2].stored.z == 3);
}
