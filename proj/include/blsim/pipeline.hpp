// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <string>
#include <vector>

#include "blsim/config.hpp"
#include "blsim/engine.hpp"
#include "blsim/weight_codec.hpp"

namespace blsim {

// Weight blob layout, per conv layer in network order: K*K*Z*O weights
// (o slowest, then kernel row i, then channel z, then kernel column j)
// followed by O biases. Values are float32 LE, or int8 weights with
// int32 LE biases when the network declares weight_format = int8.
std::vector<QuantizedWeightTensor> load_weight_blob(const NetworkConfig& cfg,
                                                    const std::vector<uint8_t>& blob);

// Deterministic synthetic weights/input for verification runs.
std::vector<QuantizedWeightTensor> random_tensors(const NetworkConfig& cfg, uint64_t seed,
                                                  double sparsity = 0.6, int32_t max_abs = 31);
FeatureMap random_map(const perf::Dims& dims, uint64_t seed);

struct ConvArtifacts {
    int layer_index = 0;
    CompressedWeightStream stream;
    std::vector<int32_t> biases;
};

struct CompressSummary {
    int layer_index = 0;
    uint64_t raw_bytes = 0;         // one byte per weight
    uint64_t stream_bytes = 0;      // serialized stream size
    int64_t total_trits = 0;        // N_3 summed over o
    int n_b = 1;
};

// Builds plans, fits the probability model, and encodes one stream per
// conv layer.
std::vector<ConvArtifacts> compress_network(const NetworkConfig& cfg,
                                            const std::vector<QuantizedWeightTensor>& tensors,
                                            std::vector<CompressSummary>* summaries = nullptr);

struct ConvLayerStats {
    int layer_index = 0;
    int64_t macs_kernel = 0;
    int64_t cycles_slice = 0;
    int64_t cycles_map = 0;
    int64_t cycles_kernel = 0;
    int64_t decode_steps = 0;
    size_t peak_buffer_pixels = 0;
    size_t buffer_capacity = 0;  // (K+1)*Z*X for the layer
    uint64_t stream_bytes = 0;
};

struct NetworkRun {
    std::vector<FeatureMap> outputs;  // one per layer
    std::vector<ConvLayerStats> stats;  // one per conv layer
    int64_t cycles_frame = 0;
};

// Executes the layer stack: conv layers on the bit-layer engine, maxpool /
// upsample / route on the host tensor path.
NetworkRun run_network(const NetworkConfig& cfg, const FeatureMap& input,
                       const std::vector<ConvArtifacts>& artifacts);

struct VerifyResult {
    bool ok = true;
    std::string message;  // first mismatch description when !ok
};

// Runs the direct-sum reference, architecture I and architecture II on
// every conv layer of the chain and demands pixel-exact agreement.
VerifyResult verify_network(const NetworkConfig& cfg, const FeatureMap& input,
                            const std::vector<QuantizedWeightTensor>& tensors);

std::string stream_filename(int layer_index);
std::string bias_filename(int layer_index);

void save_biases(const std::string& path, const std::vector<int32_t>& biases);
std::vector<int32_t> load_biases(const std::string& path, int expected);

}  // namespace blsim
