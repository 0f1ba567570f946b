// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "blsim/common.hpp"
#include "blsim/tensor.hpp"

namespace blsim {

// One nonzero trit of a signed-digit number: sign * 2^layer.
struct SignedDigit {
    int layer = 0;  // power-of-two index, >= 0
    int sign = 0;   // +1 or -1

    bool operator==(const SignedDigit&) const = default;
};

// Canonical signed-digit form of an integer: minimal nonzero digit count,
// no two adjacent layers occupied. Digits are ordered by ascending layer.
struct SignedDigitVector {
    std::vector<SignedDigit> digits;

    int64_t value() const;
    int nonzero_count() const { return int(digits.size()); }
    bool operator==(const SignedDigitVector&) const = default;
};

SignedDigitVector csd_decompose(int64_t w);

// A run of zeros followed by a nonzero +/-1 event inside one bit layer,
// or the layer-terminating EOR. Shared with the codec, which arithmetic-
// codes exactly this symbol alphabet.
struct RunSymbol {
    enum Kind : uint8_t { RUN, EOR };
    Kind kind = EOR;
    uint32_t zrun = 0;  // zero count preceding the event (RUN only)
    int sign = 0;       // +1 or -1 (RUN only)

    static RunSymbol run(uint32_t zrun, int sign) { return {RUN, zrun, sign}; }
    static RunSymbol eor() { return {EOR, 0, 0}; }
    bool operator==(const RunSymbol&) const = default;
};

// The drive program for one output index o: n_b bit layers, most
// significant first, each an EOR-terminated run sequence over the
// flattened kernel vector.
struct BitLayerPlan {
    int o = 0;
    int n_b = 1;
    int k = 1;
    int z = 1;
    uint32_t flatten_len = 0;  // always k*k*z
    std::vector<std::vector<RunSymbol>> layers;  // layers[0] = layer n_b-1

    bool operator==(const BitLayerPlan&) const = default;
};

// Which linear order the kernel tensor is flattened in. Only the row-
// grouped order (i, z, j) is defined; the id is stored in stream headers
// so other orders could be added without breaking old files.
enum class FlattenOrder : uint8_t { RowGrouped_IZJ = 0 };

// Linear index of weight (j, i, z) in the flattened kernel vector:
// (i*Z + z)*K + j. Groups one slice-buffer row fetch with its K mux taps.
uint32_t flatten_index(int j, int i, int z, int k, int z_dim);
void unflatten_index(uint32_t idx, int k, int z_dim, int& j, int& i, int& z);

// Builds the bit-layer plan of column o. n_b is 1 + the highest CSD layer
// used anywhere in the column (minimum 1, so an all-zero column still
// carries one EOR per protocol). min_n_b pads with leading empty layers,
// letting every column of a tensor share one layer count.
BitLayerPlan build_layer_plan(const QuantizedWeightTensor& w, int o,
                              FlattenOrder order = FlattenOrder::RowGrouped_IZJ, int min_n_b = 0);

// Plans for all columns, padded to a common n_b.
std::vector<BitLayerPlan> build_layer_plans(const QuantizedWeightTensor& w,
                                            FlattenOrder order = FlattenOrder::RowGrouped_IZJ);

// N_3: total nonzero trits across all layers of the plan.
int64_t count_nonzero_trits(const BitLayerPlan& plan);

// Inverse of build_layer_plan: reconstructs the flattened weight column.
std::vector<int64_t> expand_layer_plan(const BitLayerPlan& plan);

// A floating-point weight taken apart as a plain integer times a power of
// two: m = +/-(2^frac_bits + fraction), weight = m * 2^scale_exp.
struct FpInteger {
    int64_t mantissa = 0;
    int scale_exp = 0;
};

struct FpFormat {
    int frac_bits = 10;
    int exp_bits = 5;
    int bias = 15;

    static FpFormat half() { return {10, 5, 15}; }
    static FpFormat bfloat16() { return {7, 8, 127}; }
    static FpFormat tf32() { return {10, 8, 127}; }
    static FpFormat single() { return {23, 8, 127}; }
};

FpInteger fp_weight_to_integer(bool sign, int exponent, int64_t fraction, const FpFormat& fmt);

// Mean BLMAC add/sub cycles to multiply by a floating-point weight whose
// fraction field is uniform: the average nonzero-trit count of the
// fraction. Exhaustive for frac_bits <= 16, exact DP above that.
struct CycleAverage {
    uint64_t total_trits = 0;  // summed over all 2^frac_bits fractions
    uint64_t count = 1;
    double mean() const { return double(total_trits) / double(count); }
};

CycleAverage expected_fp_blmac_cycles(int frac_bits);

}  // namespace blsim
