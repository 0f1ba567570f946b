// SPDX-License-Identifier: Apache-2.0
#include "blsim/pipeline.hpp"

#include <cmath>
#include <cstring>

#include "blsim/io.hpp"

namespace blsim {

namespace {

float read_f32(const uint8_t* p) {
    uint32_t raw = uint32_t(p[0]) | (uint32_t(p[1]) << 8) | (uint32_t(p[2]) << 16) |
                   (uint32_t(p[3]) << 24);
    float f;
    std::memcpy(&f, &raw, 4);
    return f;
}

int32_t read_i32(const uint8_t* p) {
    return int32_t(uint32_t(p[0]) | (uint32_t(p[1]) << 8) | (uint32_t(p[2]) << 16) |
                   (uint32_t(p[3]) << 24));
}

EngineOptions engine_options(const NetworkConfig& cfg) {
    EngineOptions opts;
    opts.acc_bits = cfg.options.acc_bits;
    opts.overhead_percent = cfg.options.overhead_percent;
    opts.overhead_fixed = cfg.options.overhead_fixed;
    opts.mem_bytes_per_cycle = cfg.options.mem_bytes_per_cycle;
    return opts;
}

}  // namespace

std::vector<QuantizedWeightTensor> load_weight_blob(const NetworkConfig& cfg,
                                                    const std::vector<uint8_t>& blob) {
    std::vector<QuantizedWeightTensor> tensors;
    size_t pos = 0;
    for (const auto& entry : cfg.layers) {
        if (entry.kind != perf::LayerKind::Conv) continue;
        const size_t count =
            size_t(entry.k) * size_t(entry.k) * size_t(entry.kernel_z) * size_t(entry.out_channels);
        const size_t o = size_t(entry.out_channels);
        if (cfg.options.int8_weights) {
            if (pos + count + o * 4 > blob.size())
                throw IoError("weight blob too short for layer " + std::to_string(entry.index));
            QuantizedWeightTensor t(entry.k, entry.kernel_z, entry.out_channels);
            size_t idx = pos;
            for (int oi = 0; oi < entry.out_channels; oi++)
                for (int i = 0; i < entry.k; i++)
                    for (int z = 0; z < entry.kernel_z; z++)
                        for (int j = 0; j < entry.k; j++)
                            t.at(j, i, z, oi) = int8_t(blob[idx++]);
            for (int oi = 0; oi < entry.out_channels; oi++)
                t.bias(oi) = read_i32(blob.data() + idx + size_t(oi) * 4);
            pos = idx + o * 4;
            tensors.push_back(std::move(t));
        } else {
            if (pos + (count + o) * 4 > blob.size())
                throw IoError("weight blob too short for layer " + std::to_string(entry.index));
            std::vector<float> weights(count);
            std::vector<float> biases(o);
            for (size_t i = 0; i < count; i++) weights[i] = read_f32(blob.data() + pos + i * 4);
            for (size_t i = 0; i < o; i++)
                biases[i] = read_f32(blob.data() + pos + (count + i) * 4);
            for (float v : weights)
                if (!std::isfinite(v))
                    throw IoError("non-finite weight in layer " + std::to_string(entry.index));
            pos += (count + o) * 4;
            tensors.push_back(quantize_weights_uniform(weights, biases, entry.k, entry.kernel_z,
                                                       entry.out_channels,
                                                       cfg.options.frac_bits));
        }
    }
    if (pos != blob.size()) throw IoError("weight blob has trailing bytes");
    return tensors;
}

std::vector<QuantizedWeightTensor> random_tensors(const NetworkConfig& cfg, uint64_t seed,
                                                  double sparsity, int32_t max_abs) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> zero_draw(0.0, 1.0);
    std::uniform_int_distribution<int32_t> mag(1, max_abs);
    std::uniform_int_distribution<int32_t> bias(-100, 100);
    std::vector<QuantizedWeightTensor> tensors;
    for (const auto& entry : cfg.layers) {
        if (entry.kind != perf::LayerKind::Conv) continue;
        QuantizedWeightTensor t(entry.k, entry.kernel_z, entry.out_channels);
        for (int o = 0; o < entry.out_channels; o++)
            for (int i = 0; i < entry.k; i++)
                for (int z = 0; z < entry.kernel_z; z++)
                    for (int j = 0; j < entry.k; j++)
                        if (zero_draw(rng) >= sparsity)
                            t.at(j, i, z, o) = (rng() & 1 ? 1 : -1) * mag(rng);
        for (int o = 0; o < entry.out_channels; o++) t.bias(o) = bias(rng);
        tensors.push_back(std::move(t));
    }
    return tensors;
}

FeatureMap random_map(const perf::Dims& dims, uint64_t seed) {
    std::mt19937_64 rng(seed);
    FeatureMap map(dims.x, dims.y, dims.z);
    std::uniform_int_distribution<int> px(-128, 127);
    for (auto& p : map.data()) p = int8_t(px(rng));
    return map;
}

std::vector<ConvArtifacts> compress_network(const NetworkConfig& cfg,
                                            const std::vector<QuantizedWeightTensor>& tensors,
                                            std::vector<CompressSummary>* summaries) {
    if (int(tensors.size()) != cfg.conv_count())
        throw ConfigError("tensor count does not match conv layers");
    std::vector<ConvArtifacts> artifacts;
    size_t ti = 0;
    for (const auto& entry : cfg.layers) {
        if (entry.kind != perf::LayerKind::Conv) continue;
        const auto& t = tensors[ti++];
        if (t.k() != entry.k || t.z() != entry.kernel_z || t.o() != entry.out_channels)
            throw ConfigError("tensor dims do not match conv layer " +
                              std::to_string(entry.index));
        auto plans = build_layer_plans(t);
        auto model = estimate_model(plans);
        ConvArtifacts art;
        art.layer_index = entry.index;
        art.stream = ac_encode(plans, model);
        art.biases.resize(size_t(t.o()));
        for (int o = 0; o < t.o(); o++) art.biases[size_t(o)] = t.bias(o);
        if (summaries) {
            CompressSummary s;
            s.layer_index = entry.index;
            s.raw_bytes = t.weight_count();
            s.stream_bytes = art.stream.serialize().size();
            s.n_b = art.stream.n_b;
            for (const auto& plan : plans) s.total_trits += count_nonzero_trits(plan);
            summaries->push_back(s);
        }
        artifacts.push_back(std::move(art));
    }
    return artifacts;
}

NetworkRun run_network(const NetworkConfig& cfg, const FeatureMap& input,
                       const std::vector<ConvArtifacts>& artifacts) {
    auto dims = cfg.resolve_dims({input.dims_x(), input.dims_y(), input.dims_z()});
    if (int(artifacts.size()) != cfg.conv_count())
        throw ConfigError("stream count does not match conv layers");
    const EngineOptions opts = engine_options(cfg);

    NetworkRun run;
    run.outputs.reserve(cfg.layers.size());
    size_t ai = 0;
    for (const auto& entry : cfg.layers) {
        const FeatureMap& src = [&]() -> const FeatureMap& {
            if (entry.from.size() >= 1) return run.outputs[size_t(entry.from[0])];
            if (entry.index == 0) return input;
            return run.outputs[size_t(entry.index) - 1];
        }();

        switch (entry.kind) {
            case perf::LayerKind::Conv: {
                const auto& art = artifacts[ai++];
                if (art.stream.z != src.dims_z() || art.stream.k != entry.k ||
                    art.stream.o != entry.out_channels)
                    throw ConfigError("stream for layer " + std::to_string(entry.index) +
                                      " does not match the declared kernel");
                auto arrange = arrange_tiles(src.dims_x(), cfg.options.array_width);
                auto result = run_layer_blmac(src, art.stream, art.biases, entry.scale, arrange,
                                              opts);
                ConvLayerStats stats;
                stats.layer_index = entry.index;
                stats.macs_kernel = macs_per_kernel(art.stream.k, art.stream.z, art.stream.o);
                stats.cycles_slice = result.cycles_per_slice.empty() ? 0 : result.cycles_per_slice[0];
                stats.cycles_map = result.cycles_map;
                stats.cycles_kernel = result.cycles_kernel;
                stats.decode_steps = result.decode_steps;
                stats.peak_buffer_pixels = result.peak_buffer_pixels;
                stats.buffer_capacity =
                    size_t(art.stream.k + 1) * size_t(src.dims_z()) * size_t(src.dims_x());
                stats.stream_bytes = art.stream.serialize().size();
                run.cycles_frame += result.cycles_map;
                run.stats.push_back(stats);
                run.outputs.push_back(std::move(result.output));
                break;
            }
            case perf::LayerKind::Maxpool:
                run.outputs.push_back(maxpool2x2(src, entry.pool_stride));
                break;
            case perf::LayerKind::Upsample:
                run.outputs.push_back(upsample2x(src));
                break;
            case perf::LayerKind::Route:
                if (entry.from.size() == 2)
                    run.outputs.push_back(
                        concat_z(run.outputs[size_t(entry.from[0])],
                                 run.outputs[size_t(entry.from[1])]));
                else
                    run.outputs.push_back(src);
                break;
        }
        const auto& expect = dims[size_t(entry.index)];
        const auto& got = run.outputs.back();
        if (got.dims_x() != expect.x || got.dims_y() != expect.y || got.dims_z() != expect.z)
            throw ConfigError("layer " + std::to_string(entry.index) + " produced " +
                              perf::Dims{got.dims_x(), got.dims_y(), got.dims_z()}.str() +
                              ", expected " + expect.str());
    }
    return run;
}

VerifyResult verify_network(const NetworkConfig& cfg, const FeatureMap& input,
                            const std::vector<QuantizedWeightTensor>& tensors) {
    if (int(tensors.size()) != cfg.conv_count())
        throw ConfigError("tensor count does not match conv layers");
    cfg.resolve_dims({input.dims_x(), input.dims_y(), input.dims_z()});

    EngineOptions opts = engine_options(cfg);
    opts.acc_bits = 32;  // equivalence run: keep all three paths overflow-free

    std::vector<FeatureMap> outputs;
    size_t ti = 0;
    for (const auto& entry : cfg.layers) {
        const FeatureMap& src = [&]() -> const FeatureMap& {
            if (entry.from.size() >= 1) return outputs[size_t(entry.from[0])];
            if (entry.index == 0) return input;
            return outputs[size_t(entry.index) - 1];
        }();
        switch (entry.kind) {
            case perf::LayerKind::Conv: {
                const auto& t = tensors[ti++];
                std::vector<int32_t> biases(size_t(t.o()));
                for (int o = 0; o < t.o(); o++) biases[size_t(o)] = t.bias(o);

                auto oracle = scale_map(conv2d_reference(src, t), entry.scale);
                auto arrange = arrange_tiles(src.dims_x(), cfg.options.array_width);
                auto mac = run_layer_mac(src, t, entry.scale, arrange, opts);
                auto plans = build_layer_plans(t);
                auto stream = ac_encode(plans, estimate_model(plans));
                auto blmac = run_layer_blmac(src, stream, biases, entry.scale, arrange, opts);

                for (int y = 0; y < oracle.dims_y(); y++)
                    for (int o = 0; o < oracle.dims_z(); o++)
                        for (int x = 0; x < oracle.dims_x(); x++) {
                            int8_t a = oracle.at(x, y, o);
                            int8_t b = mac.output.at(x, y, o);
                            int8_t c = blmac.output.at(x, y, o);
                            if (a != b || a != c) {
                                VerifyResult r;
                                r.ok = false;
                                r.message = "layer " + std::to_string(entry.index) +
                                            " mismatch at (x=" + std::to_string(x) +
                                            ", y=" + std::to_string(y) +
                                            ", o=" + std::to_string(o) +
                                            "): reference=" + std::to_string(a) +
                                            " mac=" + std::to_string(b) +
                                            " blmac=" + std::to_string(c);
                                return r;
                            }
                        }
                outputs.push_back(std::move(blmac.output));
                break;
            }
            case perf::LayerKind::Maxpool:
                outputs.push_back(maxpool2x2(src, entry.pool_stride));
                break;
            case perf::LayerKind::Upsample:
                outputs.push_back(upsample2x(src));
                break;
            case perf::LayerKind::Route:
                if (entry.from.size() == 2)
                    outputs.push_back(concat_z(outputs[size_t(entry.from[0])],
                                               outputs[size_t(entry.from[1])]));
                else
                    outputs.push_back(src);
                break;
        }
    }
    return {};
}

std::string stream_filename(int layer_index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "layer%03d.blws", layer_index);
    return buf;
}

std::string bias_filename(int layer_index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "layer%03d.bias", layer_index);
    return buf;
}

void save_biases(const std::string& path, const std::vector<int32_t>& biases) {
    std::vector<uint8_t> out;
    out.reserve(biases.size() * 4);
    for (int32_t b : biases) io::put_u32(out, uint32_t(b));
    io::write_file_atomic(path, out);
}

std::vector<int32_t> load_biases(const std::string& path, int expected) {
    auto buf = io::read_file(path);
    if (buf.size() != size_t(expected) * 4)
        throw IoError("bias file " + path + " has wrong size");
    std::vector<int32_t> biases(static_cast<size_t>(expected));
    for (int i = 0; i < expected; i++) biases[size_t(i)] = read_i32(buf.data() + size_t(i) * 4);
    return biases;
}

}  // namespace blsim
