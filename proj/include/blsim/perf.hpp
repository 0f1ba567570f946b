// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "blsim/engine.hpp"
#include "blsim/signed_digit.hpp"

namespace blsim::perf {

struct Dims {
    int x = 0, y = 0, z = 0;
    uint64_t product() const { return uint64_t(x) * uint64_t(y) * uint64_t(z); }
    std::string str() const {
        return std::to_string(x) + "x" + std::to_string(y) + "x" + std::to_string(z);
    }
};

enum class LayerKind { Conv, Maxpool, Upsample, Route };

struct LayerSpec {
    int index = 0;
    LayerKind kind = LayerKind::Conv;
    std::string label;  // e.g. "3x3x512x1024" or "2x2/2"
    int k = 0, z = 0, o = 0;
    Dims input;
    Dims output;       // the layer's own result
    Dims stored;       // what goes to external memory (after a fused maxpool)
    bool fused_maxpool = false;
};

struct OverheadParams {
    double percent = 12.0;
    int64_t fixed = 0;
};

int64_t apply_overhead(int64_t base, const OverheadParams& p);

struct LayerEstimate {
    int64_t cycles_slice = 0;
    int64_t cycles_map = 0;
    int64_t cycles_kernel = 0;
    int64_t trits = 0;  // sum over o of N_3(o) + N_b
};

// Formula estimate: base cycles/slice = ceil(sum_o(N_3(o)+N_b) / groups),
// cycles/map multiplies by the computed slice count (every input slice is
// computed even when a fused maxpool halves the stored output), and
// cycles/kernel is the ungrouped sum, i.e. one column's worth of work.
LayerEstimate cycles_estimate_layer(const LayerSpec& spec, const std::vector<BitLayerPlan>& plans,
                                    const TileArrangement& arrange, const OverheadParams& overhead);

// ceil(compressed_bytes / cache_bytes), minimum 1: the weight tensor is
// split along o and the input is re-streamed once per pass.
int multipass_factor(uint64_t compressed_bytes, uint64_t cache_bytes);

struct BandwidthRow {
    int index = 0;
    std::string label;
    Dims input;
    Dims output;
    uint64_t input_bytes = 0;   // input map bytes times passes
    uint64_t output_bytes = 0;  // stored output map bytes
    uint64_t weight_bytes = 0;  // compressed stream bytes
    int passes = 1;
};

struct BandwidthReport {
    std::vector<BandwidthRow> rows;
    uint64_t total_input = 0;
    uint64_t total_output = 0;
    uint64_t total_weights = 0;
};

// Per-conv-layer transfer volumes. weight_bytes holds one entry per conv
// layer, in spec order.
BandwidthReport bandwidth_report(const std::vector<LayerSpec>& specs,
                                 const std::vector<uint64_t>& weight_bytes, uint64_t cache_bytes);

// cycles_per_frame * fps, in Hz.
double required_clock(int64_t cycles_per_frame, double fps);

double operations_per_clock(double total_ops, int64_t cycles_per_frame);

// Cycle columns for the report; estimates can be overridden by calibrated
// reference values.
struct CycleRow {
    int index = 0;
    LayerKind kind = LayerKind::Conv;
    std::string label;
    Dims input;
    Dims output;
    int64_t macs_kernel = 0;
    std::optional<LayerEstimate> cycles;
};

std::string render_cycles_table(const std::vector<CycleRow>& rows, int64_t cycles_frame,
                                bool tab_separated);
std::string render_bandwidth_table(const BandwidthReport& report, bool tab_separated);

}  // namespace blsim::perf
