// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "blsim/signed_digit.hpp"

using namespace blsim;

namespace {

// Minimal nonzero signed-digit count over all width-11 digit strings,
// found by exhaustive recursion. Independent of the recoder under test.
void brute_min_digits_go(int pos, int64_t acc, int used, int64_t target, int& best) {
    if (used >= best) return;
    if (pos == 11) {
        if (acc == target) best = used;
        return;
    }
    int64_t p = int64_t(1) << pos;
    brute_min_digits_go(pos + 1, acc, used, target, best);
    brute_min_digits_go(pos + 1, acc + p, used + 1, target, best);
    brute_min_digits_go(pos + 1, acc - p, used + 1, target, best);
}

int brute_min_digits(int64_t target) {
    int best = 99;
    brute_min_digits_go(0, 0, 0, target, best);
    return best;
}

QuantizedWeightTensor column_tensor(const std::vector<int32_t>& column, int k, int z) {
    QuantizedWeightTensor t(k, z, 1);
    REQUIRE(column.size() == size_t(k) * size_t(k) * size_t(z));
    for (int i = 0; i < k; i++)
        for (int zz = 0; zz < z; zz++)
            for (int j = 0; j < k; j++)
                t.at(j, i, zz, 0) = column[flatten_index(j, i, zz, k, z)];
    return t;
}

}  // namespace

TEST_CASE("recoding of small worked values") {
    CHECK(csd_decompose(0).digits.empty());
    auto seven = csd_decompose(7);
    REQUIRE(seven.digits.size() == 2);
    CHECK(seven.digits[0] == SignedDigit{0, -1});
    CHECK(seven.digits[1] == SignedDigit{3, 1});
    auto minus3 = csd_decompose(-3);
    REQUIRE(minus3.digits.size() == 2);
    CHECK(minus3.digits[0] == SignedDigit{0, 1});
    CHECK(minus3.digits[1] == SignedDigit{2, -1});
}

TEST_CASE("recoding reconstructs the value, is minimal and non-adjacent") {
    for (int64_t w = -255; w <= 255; w++) {
        auto sd = csd_decompose(w);
        CHECK(sd.value() == w);
        CHECK(sd.nonzero_count() == brute_min_digits(w));
        int pop = 0;
        uint64_t mag = uint64_t(w < 0 ? -w : w);
        while (mag) {
            pop += int(mag & 1);
            mag >>= 1;
        }
        CHECK(sd.nonzero_count() <= pop);
        for (size_t i = 1; i < sd.digits.size(); i++)
            CHECK(sd.digits[i].layer > sd.digits[i - 1].layer + 1);
    }
}

TEST_CASE("recoding round-trips random wide values") {
    std::mt19937_64 rng(321);
    std::uniform_int_distribution<int64_t> dist(-(int64_t(1) << 29) + 1, (int64_t(1) << 29) - 1);
    for (int i = 0; i < 2000; i++) {
        int64_t w = dist(rng);
        auto sd = csd_decompose(w);
        CHECK(sd.value() == w);
        for (size_t d = 1; d < sd.digits.size(); d++)
            CHECK(sd.digits[d].layer > sd.digits[d - 1].layer + 1);
    }
    CHECK_THROWS_AS(csd_decompose(int64_t(1) << 30), ConfigError);
}

TEST_CASE("flatten index formula and bijection") {
    CHECK(flatten_index(0, 0, 0, 3, 2) == 0);
    CHECK(flatten_index(1, 2, 1, 3, 2) == 16);
    for (int i = 0; i < 3; i++)
        for (int z = 0; z < 2; z++)
            for (int j = 0; j < 3; j++) {
                uint32_t idx = flatten_index(j, i, z, 3, 2);
                CHECK(idx < 18);
                int jj, ii, zz;
                unflatten_index(idx, 3, 2, jj, ii, zz);
                CHECK(jj == j);
                CHECK(ii == i);
                CHECK(zz == z);
            }
}

TEST_CASE("layer plan for the worked column [3, 0, -1]") {
    auto t = column_tensor({3, 0, -1}, 1, 3);
    auto plan = build_layer_plan(t, 0);
    CHECK(plan.n_b == 3);
    CHECK(plan.flatten_len == 3);
    REQUIRE(plan.layers.size() == 3);
    // layer 2: the +4 of weight 3 at position 0
    CHECK(plan.layers[0] == std::vector<RunSymbol>{RunSymbol::run(0, 1), RunSymbol::eor()});
    // layer 1: empty
    CHECK(plan.layers[1] == std::vector<RunSymbol>{RunSymbol::eor()});
    // layer 0: the -1 of weight 3 at position 0, the -1 at position 2
    CHECK(plan.layers[2] == std::vector<RunSymbol>{RunSymbol::run(0, -1), RunSymbol::run(1, -1),
                                                   RunSymbol::eor()});
    CHECK(count_nonzero_trits(plan) == 3);
    CHECK(expand_layer_plan(plan) == std::vector<int64_t>{3, 0, -1});
}

TEST_CASE("degenerate plans") {
    auto zero = build_layer_plan(column_tensor({0, 0, 0, 0}, 1, 4), 0);
    CHECK(zero.n_b == 1);
    CHECK(zero.layers == std::vector<std::vector<RunSymbol>>{{RunSymbol::eor()}});
    CHECK(count_nonzero_trits(zero) == 0);

    auto one = build_layer_plan(column_tensor({1}, 1, 1), 0);
    CHECK(one.n_b == 1);
    CHECK(one.layers ==
          std::vector<std::vector<RunSymbol>>{{RunSymbol::run(0, 1), RunSymbol::eor()}});

    auto q = build_layer_plan(column_tensor({1, 1, 1, 1, 1}, 1, 5), 0);
    CHECK(count_nonzero_trits(q) == 5);
}

TEST_CASE("plans round-trip random columns and trit count ignores order") {
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<int32_t> wdist(-127, 127);
    std::uniform_real_distribution<double> zero_draw(0.0, 1.0);
    for (int trial = 0; trial < 1000; trial++) {
        int k = (trial % 2) ? 3 : 1;
        int z = 1 + int(rng() % 24);
        QuantizedWeightTensor t(k, z, 1);
        double sparsity = zero_draw(rng);
        for (int i = 0; i < k; i++)
            for (int zz = 0; zz < z; zz++)
                for (int j = 0; j < k; j++)
                    if (zero_draw(rng) >= sparsity) t.at(j, i, zz, 0) = wdist(rng);
        auto plan = build_layer_plan(t, 0);
        auto column = expand_layer_plan(plan);
        int64_t trits = 0;
        for (int i = 0; i < k; i++)
            for (int zz = 0; zz < z; zz++)
                for (int j = 0; j < k; j++) {
                    CHECK(column[flatten_index(j, i, zz, k, z)] == t.at(j, i, zz, 0));
                    trits += csd_decompose(t.at(j, i, zz, 0)).nonzero_count();
                }
        // N_3 is a property of the digit multiset, not of the flatten order
        CHECK(count_nonzero_trits(plan) == trits);
    }
}

TEST_CASE("tensor-wide plans share one layer count") {
    QuantizedWeightTensor t(1, 2, 3);
    t.at(0, 0, 0, 0) = 1;    // one layer alone
    t.at(0, 0, 1, 1) = 100;  // 100 = 128 - 32 + 4, needs 8 layers
    auto plans = build_layer_plans(t);
    REQUIRE(plans.size() == 3);
    for (const auto& p : plans) CHECK(p.n_b == plans[1].n_b);
    CHECK(plans[1].n_b == 8);
    CHECK(expand_layer_plan(plans[0]) == std::vector<int64_t>{1, 0});
    CHECK(expand_layer_plan(plans[1]) == std::vector<int64_t>{0, 100});
    CHECK(expand_layer_plan(plans[2]) == std::vector<int64_t>{0, 0});
}

TEST_CASE("floating-point weights as integers") {
    auto half_one = fp_weight_to_integer(false, 15, 0, FpFormat::half());
    CHECK(half_one.mantissa == 1024);
    CHECK(half_one.scale_exp == -10);
    auto half_1p5 = fp_weight_to_integer(false, 15, 512, FpFormat::half());
    CHECK(half_1p5.mantissa == 1536);
    CHECK(half_1p5.scale_exp == -10);
    auto bf_minus2 = fp_weight_to_integer(true, 128, 0, FpFormat::bfloat16());
    CHECK(bf_minus2.mantissa == -128);
    CHECK(bf_minus2.scale_exp == -6);
    // decode a corpus of bfloat16 values against the native float route
    for (int exp = 1; exp < 255; exp += 13)
        for (int frac = 0; frac < 128; frac += 17) {
            auto m = fp_weight_to_integer(true, exp, frac, FpFormat::bfloat16());
            double direct = -(1.0 + frac / 128.0) * std::pow(2.0, exp - 127);
            CHECK(double(m.mantissa) * std::pow(2.0, m.scale_exp) == doctest::Approx(direct));
        }
    CHECK_THROWS_AS(fp_weight_to_integer(false, 31, 0, FpFormat::half()), ConfigError);  // Inf
    CHECK_THROWS_AS(fp_weight_to_integer(false, 31, 5, FpFormat::half()), ConfigError);  // NaN
    CHECK_THROWS_AS(fp_weight_to_integer(false, 0, 5, FpFormat::half()), ConfigError);
}

TEST_CASE("average cycles per floating-point multiply-accumulate") {
    // oracle: enumerate every fraction and count digits via the recoder
    auto oracle = [](int frac_bits) {
        uint64_t total = 0;
        for (int64_t frac = 0; frac < (int64_t(1) << frac_bits); frac++)
            total += uint64_t(csd_decompose(frac).nonzero_count());
        return double(total) / double(int64_t(1) << frac_bits);
    };
    CHECK(expected_fp_blmac_cycles(7).mean() == doctest::Approx(oracle(7)).epsilon(1e-12));
    CHECK(expected_fp_blmac_cycles(10).mean() == doctest::Approx(oracle(10)).epsilon(1e-12));
    CHECK(std::abs(expected_fp_blmac_cycles(7).mean() - 2.77) < 0.02);
    CHECK(std::abs(expected_fp_blmac_cycles(10).mean() - 3.77) < 0.02);
    CHECK(std::abs(expected_fp_blmac_cycles(23).mean() - 8.11) < 0.05);
}

TEST_CASE("digit-count DP matches exhaustive enumeration") {
    // the implementation switches to DP above 16 fraction bits; check the
    // DP machinery against exhaustives where both are cheap
    for (int bits = 17; bits <= 19; bits++) {
        uint64_t total = 0;
        for (int64_t v = 0; v < (int64_t(1) << bits); v++)
            total += uint64_t(csd_decompose(v).nonzero_count());
        auto got = expected_fp_blmac_cycles(bits);
        CHECK(got.total_trits == total);
        CHECK(got.count == uint64_t(1) << bits);
    }
}

TEST_CASE("digit density tends to one third") {
    auto a20 = expected_fp_blmac_cycles(20).mean();
    auto a24 = expected_fp_blmac_cycles(24).mean();
    CHECK(a24 - a20 == doctest::Approx(4.0 / 3.0).epsilon(0.01));
    CHECK(a24 / 24.0 == doctest::Approx(1.0 / 3.0).epsilon(0.04));
}
