// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <random>

#include "blsim/tensor.hpp"

using namespace blsim;

namespace {

FeatureMap random_map(int x, int y, int z, uint64_t seed) {
    FeatureMap m(x, y, z);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> px(-128, 127);
    for (auto& p : m.data()) p = int8_t(px(rng));
    return m;
}

}  // namespace

TEST_CASE("identity 1x1 kernel passes the input through") {
    auto in = random_map(5, 4, 1, 1);
    QuantizedWeightTensor w(1, 1, 1);
    w.at(0, 0, 0, 0) = 1;
    auto acc = conv2d_reference(in, w);
    for (int y = 0; y < 4; y++)
        for (int x = 0; x < 5; x++) CHECK(acc.at(x, y, 0) == in.at(x, y, 0));
}

TEST_CASE("zero weights leave only the bias") {
    auto in = random_map(6, 6, 3, 2);
    QuantizedWeightTensor w(3, 3, 4);
    for (int o = 0; o < 4; o++) w.bias(o) = 10 * (o + 1);
    auto acc = conv2d_reference(in, w);
    for (int y = 0; y < 6; y++)
        for (int o = 0; o < 4; o++)
            for (int x = 0; x < 6; x++) CHECK(acc.at(x, y, o) == 10 * (o + 1));
}

TEST_CASE("3x3 all-ones kernel sums the neighbourhood") {
    // 4x4 input of 0..15, centre pixel (1,1) covers the top-left 3x3 block
    FeatureMap in(4, 4, 1);
    for (int y = 0; y < 4; y++)
        for (int x = 0; x < 4; x++) in.at(x, y, 0) = int8_t(y * 4 + x);
    QuantizedWeightTensor w(3, 1, 1);
    for (int i = 0; i < 3; i++)
        for (int j = 0; j < 3; j++) w.at(j, i, 0, 0) = 1;
    auto acc = conv2d_reference(in, w);
    CHECK(acc.at(1, 1, 0) == 45);
    // corner (0,0): out-of-range taps drop, leaving the 2x2 block
    CHECK(acc.at(0, 0, 0) == 0 + 1 + 4 + 5);
}

TEST_CASE("reference convolution is linear in the input") {
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> wdist(-20, 20);
    for (int trial = 0; trial < 20; trial++) {
        auto a = random_map(7, 5, 2, 100 + trial);
        auto b = random_map(7, 5, 2, 200 + trial);
        QuantizedWeightTensor w(3, 2, 3);
        for (int o = 0; o < 3; o++) {
            for (int i = 0; i < 3; i++)
                for (int z = 0; z < 2; z++)
                    for (int j = 0; j < 3; j++) w.at(j, i, z, o) = wdist(rng);
            w.bias(o) = wdist(rng);
        }
        // sum maps elementwise in wide precision via two half-scaled maps
        FeatureMap sum(7, 5, 2);
        bool in_range = true;
        for (size_t i = 0; i < sum.data().size(); i++) {
            int s = int(a.data()[i]) + int(b.data()[i]);
            if (s < -128 || s > 127) in_range = false;
            sum.data()[i] = int8_t(std::clamp(s, -128, 127));
        }
        if (!in_range) continue;
        auto fa = conv2d_reference(a, w);
        auto fb = conv2d_reference(b, w);
        auto fs = conv2d_reference(sum, w);
        for (int y = 0; y < 5; y++)
            for (int o = 0; o < 3; o++)
                for (int x = 0; x < 7; x++)
                    CHECK(fs.at(x, y, o) == fa.at(x, y, o) + fb.at(x, y, o) - w.bias(o));
    }
}

TEST_CASE("edge outputs equal the sum with out-of-range terms dropped") {
    auto in = random_map(6, 6, 2, 9);
    QuantizedWeightTensor w(3, 2, 1);
    std::mt19937_64 rng(10);
    std::uniform_int_distribution<int> wdist(-9, 9);
    for (int i = 0; i < 3; i++)
        for (int z = 0; z < 2; z++)
            for (int j = 0; j < 3; j++) w.at(j, i, z, 0) = wdist(rng);
    auto acc = conv2d_reference(in, w);
    for (int y : {0, 5})
        for (int x : {0, 5}) {
            int64_t expect = 0;
            for (int z = 0; z < 2; z++)
                for (int i = 0; i < 3; i++)
                    for (int j = 0; j < 3; j++) {
                        int xx = x + j - 1, yy = y + i - 1;
                        if (xx < 0 || xx >= 6 || yy < 0 || yy >= 6) continue;
                        expect += int64_t(in.at(xx, yy, z)) * w.at(j, i, z, 0);
                    }
            CHECK(acc.at(x, y, 0) == expect);
        }
}

TEST_CASE("scale stage examples") {
    ScaleParams p;  // leaky 26/256, unit scale
    CHECK(apply_bias_activation_scale(100, 0, p) == 100);
    CHECK(apply_bias_activation_scale(-256, 0, p) == -26);
    CHECK(apply_bias_activation_scale(300, 0, p) == 127);
    CHECK(apply_bias_activation_scale(-100000, 0, p) == -128);
    // bias is added before the activation
    CHECK(apply_bias_activation_scale(-50, 50, p) == 0);
    // rounding is half away from zero; leaky 255/256 keeps small negative
    // magnitudes intact so the rounding is what's observed
    ScaleParams shift;
    shift.leaky_num = 255;
    shift.leaky_shift = 8;
    shift.out_shift = 1;
    CHECK(apply_bias_activation_scale(3, 0, shift) == 2);
    CHECK(apply_bias_activation_scale(-3, 0, shift) == -2);
    CHECK(apply_bias_activation_scale(2, 0, shift) == 1);
    CHECK(apply_bias_activation_scale(-2, 0, shift) == -1);
}

TEST_CASE("scale stage is monotone in the accumulator") {
    ScaleParams p;
    p.out_mult = 3;
    p.out_shift = 4;
    int prev = -128;
    for (int64_t acc = -3000; acc <= 3000; acc++) {
        int v = apply_bias_activation_scale(acc, 7, p);
        CHECK(v >= prev);
        prev = v;
    }
}

TEST_CASE("maxpool 2x2") {
    FeatureMap in(2, 2, 1);
    in.at(0, 0, 0) = 1;
    in.at(1, 0, 0) = 2;
    in.at(0, 1, 0) = 3;
    in.at(1, 1, 0) = 4;
    auto out = maxpool2x2(in, 2);
    CHECK(out.dims_x() == 1);
    CHECK(out.dims_y() == 1);
    CHECK(out.at(0, 0, 0) == 4);

    FeatureMap flat(8, 6, 3, 42);
    auto pooled = maxpool2x2(flat, 2);
    CHECK(pooled.dims_x() == 4);
    for (auto p : pooled.data()) CHECK(p == 42);

    // stride 1 keeps dims; far edges replicate the last valid pixel
    auto same = maxpool2x2(in, 1);
    CHECK(same.dims_x() == 2);
    CHECK(same.dims_y() == 2);
    CHECK(same.at(0, 0, 0) == 4);
    CHECK(same.at(1, 0, 0) == 4);
    CHECK(same.at(0, 1, 0) == 4);
    CHECK(same.at(1, 1, 0) == 4);
}

TEST_CASE("maxpool stride-2 dims are integer halves") {
    auto big = random_map(416, 416, 2, 3);
    auto out = maxpool2x2(big, 2);
    CHECK(out.dims_x() == 208);
    CHECK(out.dims_y() == 208);
    CHECK(out.dims_z() == 2);
    // pooled equals explicit window max
    for (int y : {0, 100, 207})
        for (int x : {0, 57, 207}) {
            int m = std::max({int(big.at(2 * x, 2 * y, 1)), int(big.at(2 * x + 1, 2 * y, 1)),
                              int(big.at(2 * x, 2 * y + 1, 1)), int(big.at(2 * x + 1, 2 * y + 1, 1))});
            CHECK(int(out.at(x, y, 1)) == m);
        }
}

TEST_CASE("macs per kernel products") {
    CHECK(macs_per_kernel(3, 3, 16) == 432);
    CHECK(macs_per_kernel(3, 512, 1024) == 4718592);
    CHECK(macs_per_kernel(1, 1024, 256) == 262144);
}

TEST_CASE("uniform quantization") {
    CHECK(quantize_value(0.0f, 7) == 0);
    CHECK(quantize_value(0.5f, 4) == 8);
    CHECK(quantize_value(-0.3f, 4) == -5);
    CHECK(quantize_value(100.0f, 4, 127) == 127);
    CHECK(quantize_value(-100.0f, 4, 127) == -127);
}

TEST_CASE("upsample and concat") {
    auto in = random_map(13, 13, 4, 5);
    auto up = upsample2x(in);
    CHECK(up.dims_x() == 26);
    CHECK(up.dims_y() == 26);
    CHECK(up.dims_z() == 4);
    for (int y = 0; y < 26; y++)
        for (int z = 0; z < 4; z++)
            for (int x = 0; x < 26; x++) CHECK(up.at(x, y, z) == in.at(x / 2, y / 2, z));

    FeatureMap c(26, 26, 3, 7);
    auto cat = concat_z(up, c);
    CHECK(cat.dims_z() == 7);
    CHECK(cat.at(3, 3, 1) == up.at(3, 3, 1));
    CHECK(cat.at(3, 3, 5) == 7);

    FeatureMap constant(4, 4, 1, 9);
    auto up2 = upsample2x(constant);
    for (auto p : up2.data()) CHECK(p == 9);

    CHECK_THROWS_AS(concat_z(in, c), ConfigError);
}

TEST_CASE("feature map file round trip") {
    auto in = random_map(20, 10, 3, 17);
    auto bytes = in.serialize();
    CHECK(bytes.size() == 16 + 20 * 10 * 3);
    CHECK(bytes[0] == 'F');
    // x fastest, then z, then y: pixel (x=2, y=0, z=1) sits at 16 + 1*20 + 2
    CHECK(int8_t(bytes[16 + 20 + 2]) == in.at(2, 0, 1));
    auto back = FeatureMap::deserialize(bytes.data(), bytes.size());
    CHECK(back == in);

    auto path = std::filesystem::temp_directory_path() / "blsim_fmap_test.fmap";
    in.save(path.string());
    CHECK(FeatureMap::load(path.string()) == in);
    std::filesystem::remove(path);

    bytes[2] = 'X';
    CHECK_THROWS_AS(FeatureMap::deserialize(bytes.data(), bytes.size()), IoError);
}

TEST_CASE("conv dimension mismatch is a configuration error") {
    auto in = random_map(4, 4, 2, 1);
    QuantizedWeightTensor w(3, 3, 1);
    CHECK_THROWS_AS(conv2d_reference(in, w), ConfigError);
}
