// SPDX-License-Identifier: Apache-2.0
#include "blsim/signed_digit.hpp"

#include <algorithm>
#include <array>

namespace blsim {

int64_t SignedDigitVector::value() const {
    int64_t v = 0;
    for (const auto& d : digits) v += int64_t(d.sign) * (int64_t(1) << d.layer);
    return v;
}

SignedDigitVector csd_decompose(int64_t w) {
    if (w <= -(int64_t(1) << 30) || w >= (int64_t(1) << 30))
        throw ConfigError("weight out of range for signed-digit recoding");
    SignedDigitVector out;
    int layer = 0;
    while (w != 0) {
        if (w & 1) {
            // w mod 4 == 1 takes +1, == 3 takes -1; the remainder stays even
            int sign = (w & 3) == 1 ? 1 : -1;
            out.digits.push_back({layer, sign});
            w -= sign;
        }
        w >>= 1;
        layer++;
    }
    return out;
}

uint32_t flatten_index(int j, int i, int z, int k, int z_dim) {
    return uint32_t((i * z_dim + z) * k + j);
}

void unflatten_index(uint32_t idx, int k, int z_dim, int& j, int& i, int& z) {
    j = int(idx % uint32_t(k));
    uint32_t t = idx / uint32_t(k);
    z = int(t % uint32_t(z_dim));
    i = int(t / uint32_t(z_dim));
}

BitLayerPlan build_layer_plan(const QuantizedWeightTensor& w, int o, FlattenOrder order,
                              int min_n_b) {
    if (o < 0 || o >= w.o()) throw ConfigError("output index out of range");
    if (order != FlattenOrder::RowGrouped_IZJ) throw ConfigError("unknown flatten order");
    const int k = w.k(), z_dim = w.z();
    const uint32_t flatten_len = uint32_t(k) * uint32_t(k) * uint32_t(z_dim);

    // CSD digits of every position, bucketed per layer
    std::vector<std::vector<std::pair<uint32_t, int>>> per_layer;  // (position, sign)
    int max_layer = -1;
    for (int i = 0; i < k; i++)
        for (int z = 0; z < z_dim; z++)
            for (int j = 0; j < k; j++) {
                int32_t weight = w.at(j, i, z, o);
                if (weight == 0) continue;
                uint32_t pos = flatten_index(j, i, z, k, z_dim);
                for (const auto& d : csd_decompose(weight).digits) {
                    if (d.layer >= int(per_layer.size())) per_layer.resize(size_t(d.layer) + 1);
                    per_layer[size_t(d.layer)].push_back({pos, d.sign});
                    max_layer = std::max(max_layer, d.layer);
                }
            }

    BitLayerPlan plan;
    plan.o = o;
    plan.k = k;
    plan.z = z_dim;
    plan.flatten_len = flatten_len;
    plan.n_b = std::max({1, max_layer + 1, min_n_b});
    plan.layers.resize(size_t(plan.n_b));
    for (int l = plan.n_b - 1; l >= 0; l--) {
        auto& symbols = plan.layers[size_t(plan.n_b - 1 - l)];
        if (l <= max_layer) {
            uint32_t prev_end = 0;  // flat position after the previous nonzero
            for (const auto& [pos, sign] : per_layer[size_t(l)]) {
                symbols.push_back(RunSymbol::run(pos - prev_end, sign));
                prev_end = pos + 1;
            }
        }
        symbols.push_back(RunSymbol::eor());
    }
    return plan;
}

std::vector<BitLayerPlan> build_layer_plans(const QuantizedWeightTensor& w, FlattenOrder order) {
    std::vector<BitLayerPlan> plans;
    plans.reserve(size_t(w.o()));
    int n_b = 1;
    for (int o = 0; o < w.o(); o++) {
        plans.push_back(build_layer_plan(w, o, order));
        n_b = std::max(n_b, plans.back().n_b);
    }
    // all columns share one layer count so the tiles shift in lockstep
    for (auto& plan : plans)
        if (plan.n_b < n_b) {
            plan.layers.insert(plan.layers.begin(), size_t(n_b - plan.n_b),
                               std::vector<RunSymbol>{RunSymbol::eor()});
            plan.n_b = n_b;
        }
    return plans;
}

int64_t count_nonzero_trits(const BitLayerPlan& plan) {
    int64_t total = 0;
    for (const auto& layer : plan.layers) {
        if (layer.empty() || layer.back().kind != RunSymbol::EOR)
            throw StreamError("bit layer not EOR-terminated");
        total += int64_t(layer.size()) - 1;
    }
    return total;
}

std::vector<int64_t> expand_layer_plan(const BitLayerPlan& plan) {
    std::vector<int64_t> column(plan.flatten_len, 0);
    if (int(plan.layers.size()) != plan.n_b) throw StreamError("layer count mismatch");
    for (int li = 0; li < plan.n_b; li++) {
        int layer = plan.n_b - 1 - li;
        uint64_t cursor = 0;
        const auto& symbols = plan.layers[size_t(li)];
        for (size_t s = 0; s < symbols.size(); s++) {
            const auto& sym = symbols[s];
            if (sym.kind == RunSymbol::EOR) {
                if (s + 1 != symbols.size()) throw StreamError("EOR before end of layer");
                break;
            }
            cursor += sym.zrun;
            if (cursor >= plan.flatten_len)
                throw StreamError("run past end of flattened kernel");
            column[size_t(cursor)] += int64_t(sym.sign) * (int64_t(1) << layer);
            cursor++;
        }
    }
    return column;
}

FpInteger fp_weight_to_integer(bool sign, int exponent, int64_t fraction, const FpFormat& fmt) {
    if (fmt.frac_bits < 1 || fmt.frac_bits > 52 || fmt.exp_bits < 2 || fmt.exp_bits > 15)
        throw ConfigError("unsupported floating-point format");
    const int exp_max = (1 << fmt.exp_bits) - 1;
    if (exponent < 0 || exponent > exp_max) throw ConfigError("exponent out of format range");
    if (fraction < 0 || fraction >= (int64_t(1) << fmt.frac_bits))
        throw ConfigError("fraction out of format range");
    if (exponent == exp_max) throw ConfigError("NaN/Inf weight rejected");
    if (exponent == 0) throw ConfigError("zero/denormal weight not supported");
    FpInteger out;
    out.mantissa = (int64_t(1) << fmt.frac_bits) + fraction;
    if (sign) out.mantissa = -out.mantissa;
    out.scale_exp = exponent - fmt.bias - fmt.frac_bits;
    return out;
}

namespace {

// Nonzero-trit count of the canonical recoding, without materializing it.
int csd_weight(uint64_t n) {
    return __builtin_popcountll(n ^ (3 * n));
}

// Exact sum of csd_weight over all values in [0, 2^bits) by dynamic
// programming over the recoding automaton. State while scanning bits LSB
// first: (pending carry, current bit); the emission at a position needs
// one bit of lookahead.
uint64_t total_trits_dp(int bits) {
    // dp[c][b] = {count, trit_sum} over all prefixes ending in state (c, b)
    struct Cell {
        uint64_t count = 0;
        uint64_t trits = 0;
    };
    std::array<std::array<Cell, 2>, 2> dp{};
    dp[0][0] = {1, 0};
    dp[0][1] = {1, 0};
    for (int i = 0; i < bits; i++) {
        std::array<std::array<Cell, 2>, 2> next{};
        const bool last = (i == bits - 1);
        for (int c = 0; c <= 1; c++)
            for (int b = 0; b <= 1; b++) {
                const Cell& cur = dp[size_t(c)][size_t(b)];
                if (cur.count == 0) continue;
                for (int look = 0; look <= (last ? 0 : 1); look++) {
                    int e = b + c;
                    int emit = (e == 1) ? 1 : 0;
                    int carry = (e == 2 || (e == 1 && look == 1)) ? 1 : 0;
                    Cell& dst = next[size_t(carry)][size_t(look)];
                    dst.count += cur.count;
                    dst.trits += cur.trits + uint64_t(emit) * cur.count;
                }
            }
        dp = next;
    }
    // a surviving carry resolves as one final +1 digit above the MSB
    uint64_t total = 0;
    for (int c = 0; c <= 1; c++) {
        const Cell& cur = dp[size_t(c)][0];
        total += cur.trits + uint64_t(c) * cur.count;
    }
    return total;
}

}  // namespace

CycleAverage expected_fp_blmac_cycles(int frac_bits) {
    if (frac_bits < 0 || frac_bits > 24) throw ConfigError("frac_bits must be in [0, 24]");
    CycleAverage avg;
    avg.count = uint64_t(1) << frac_bits;
    if (frac_bits == 0) return avg;
    if (frac_bits <= 16) {
        for (uint64_t frac = 0; frac < avg.count; frac++) avg.total_trits += uint64_t(csd_weight(frac));
    } else {
        avg.total_trits = total_trits_dp(frac_bits);
    }
    return avg;
}

}  // namespace blsim
