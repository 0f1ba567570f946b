// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "blsim/signed_digit.hpp"

namespace blsim {

// Binary-bin probabilities, 16-bit fixed point, strictly inside (0, 2^16).
// Each probability is P(bin == 1). Two contexts: 0 while the current bit
// layer has produced no run yet, 1 once it has. Each context holds the
// probability of the EOR flag and of every unary-prefix position of the
// run-length binarization.
struct ProbabilityModel {
    static constexpr int kPrefixBins = 16;
    static constexpr uint16_t kMinProb = 1;
    static constexpr uint16_t kMaxProb = 0xFFFF;

    struct Context {
        uint16_t eor = 0x8000;
        uint16_t prefix[kPrefixBins] = {0x8000, 0x8000, 0x8000, 0x8000, 0x8000, 0x8000,
                                        0x8000, 0x8000, 0x8000, 0x8000, 0x8000, 0x8000,
                                        0x8000, 0x8000, 0x8000, 0x8000};
        bool operator==(const Context&) const = default;
    };
    Context contexts[2];

    static ProbabilityModel uniform() { return ProbabilityModel{}; }
    static uint16_t prob_from_counts(uint64_t ones, uint64_t total);
    void validate() const;
    bool operator==(const ProbabilityModel&) const = default;
};

// Empirical bin frequencies of the given plans, clamped away from 0 and
// 2^16. Bins never observed stay at 1/2.
ProbabilityModel estimate_model(const std::vector<BitLayerPlan>& plans);

// Run-length form of one bit layer: ascending (position, sign) events
// become (gap, sign) runs, closed by exactly one EOR.
std::vector<RunSymbol> rle_encode_layer(const std::vector<std::pair<uint32_t, int>>& events,
                                        uint32_t flatten_len);
std::vector<std::pair<uint32_t, int>> rle_decode_layer(const std::vector<RunSymbol>& symbols,
                                                       uint32_t flatten_len);

// Compressed weights for one convolution layer: header with geometry and
// the probability model, then one independently decodable arithmetic-coded
// payload per output index.
struct CompressedWeightStream {
    static constexpr uint16_t kFormatVersion = 1;

    int k = 1;
    int z = 1;
    int o = 1;
    int n_b = 1;
    FlattenOrder order = FlattenOrder::RowGrouped_IZJ;
    ProbabilityModel model;
    std::vector<uint32_t> payload_offsets;  // o+1 entries, relative to payload start
    std::vector<uint8_t> payload;

    uint32_t flatten_len() const { return uint32_t(k) * uint32_t(k) * uint32_t(z); }
    size_t payload_bytes(int o_index) const {
        return payload_offsets[size_t(o_index) + 1] - payload_offsets[size_t(o_index)];
    }

    // File form, all integers little-endian: magic "BLWS", u16 version,
    // u16 K, u32 Z, u32 O, u8 N_b, u8 flatten-order id, u16 probability
    // word count + that many u16s, u32 offsets[O+1], payload bytes.
    std::vector<uint8_t> serialize() const;
    static CompressedWeightStream deserialize(const uint8_t* data, size_t size);
    void save(const std::string& path) const;
    static CompressedWeightStream load(const std::string& path);

    bool operator==(const CompressedWeightStream&) const = default;
};

// Arithmetic-codes the plans (one per output index, in order, sharing one
// n_b) into a stream. Symbol coding per event: one context-coded EOR-flag
// bin; for runs, the zero count as a unary prefix of context-coded 1-bins
// and a 0-bin terminator followed by that many bypass suffix bits, then
// the sign as one bypass bit.
CompressedWeightStream ac_encode(const std::vector<BitLayerPlan>& plans,
                                 const ProbabilityModel& model);

struct DecodedPlan {
    BitLayerPlan plan;
    int64_t decode_steps = 0;  // one per run symbol, including each EOR
};

// Exact inverse of ac_encode for one output index.
DecodedPlan ac_decode(const CompressedWeightStream& stream, int o_index);

// Incremental decoder over one payload; yields one RunSymbol per step.
// This is the form the inference engine drives directly.
class SymbolDecoder {
public:
    SymbolDecoder(const CompressedWeightStream& stream, int o_index);

    RunSymbol next();
    bool done() const { return layers_done_ >= n_b_; }
    int64_t steps() const { return steps_; }

private:
    uint8_t next_byte();
    int decode_bit(uint16_t prob_one);
    int decode_bypass();

    const uint8_t* payload_;
    size_t payload_size_;
    size_t pos_ = 0;
    size_t zero_fill_ = 0;
    uint32_t range_ = 0xFFFFFFFFu;
    uint32_t code_ = 0;
    const ProbabilityModel* model_;
    uint32_t flatten_len_;
    int n_b_;
    int layers_done_ = 0;
    uint64_t cursor_ = 0;      // flat position after the last nonzero
    bool layer_has_run_ = false;
    int64_t steps_ = 0;
};

}  // namespace blsim
