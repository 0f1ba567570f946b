// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "blsim/perf.hpp"
#include "blsim/tensor.hpp"

namespace blsim {

// One layer of the network description. Layers connect to their
// predecessor by default; `from` overrides the source (one entry) or
// concatenates two earlier outputs (route with two entries).
struct LayerEntry {
    perf::LayerKind kind = perf::LayerKind::Conv;
    int index = 0;
    std::string name;
    std::vector<int> from;

    // conv
    int k = 0;
    int kernel_z = 0;  // declared input channels, checked against the chain
    int out_channels = 0;
    ScaleParams scale;

    // maxpool
    int pool_stride = 2;
};

struct NetworkOptions {
    int acc_bits = 20;
    int array_width = 416;
    uint64_t cache_bytes = 262144;
    double mem_bytes_per_cycle = 0.0;
    double overhead_percent = 12.0;
    int64_t overhead_fixed = 0;
    int frac_bits = 4;
    bool int8_weights = false;
    std::optional<perf::Dims> input_dims;
};

// Line-oriented network description: `[options]`, `[input]`, `[conv]`,
// `[maxpool]`, `[upsample]`, `[route]` stanzas of `key = value` lines.
struct NetworkConfig {
    NetworkOptions options;
    std::vector<LayerEntry> layers;

    static NetworkConfig parse(const std::string& text);
    static NetworkConfig load(const std::string& path);

    // Propagates dims through the chain, checking that every layer's input
    // matches its source output. Returns each layer's output dims.
    std::vector<perf::Dims> resolve_dims(const perf::Dims& input) const;

    // Layer specs for the performance model, with maxpool layers that
    // directly consume a conv marked as fused into it.
    std::vector<perf::LayerSpec> layer_specs(const perf::Dims& input) const;

    int conv_count() const;
};

}  // namespace blsim
