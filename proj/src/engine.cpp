// SPDX-License-Identifier: Apache-2.0
#include "blsim/engine.hpp"

#include <algorithm>
#include <cmath>

namespace blsim {

SliceBuffer::SliceBuffer(int k, int z_dim, int width) : k_(k), z_dim_(z_dim), width_(width) {
    if (k < 1 || k % 2 == 0) throw ConfigError("kernel size must be odd or 1");
    if (z_dim < 1 || width < 1) throw ConfigError("slice buffer dims must be positive");
    slots_.resize(size_t(k) + 1);
    zero_row_.assign(size_t(width), 0);
}

void SliceBuffer::push(std::span<const int8_t> slice) {
    if (slice.size() != size_t(z_dim_) * size_t(width_))
        throw ConfigError("slice size does not match buffer geometry");
    Slot& s = staging();
    if (s.occupied) throw ProtocolError("push into occupied staging slot; rotate first");
    s.pixels.assign(slice.begin(), slice.end());
    s.is_virtual = false;
    s.occupied = true;
}

void SliceBuffer::push_virtual_zero() {
    Slot& s = staging();
    if (s.occupied) throw ProtocolError("push into occupied staging slot; rotate first");
    s.pixels.clear();
    s.is_virtual = true;
    s.occupied = true;
}

void SliceBuffer::rotate() {
    base_ = (base_ + 1) % (k_ + 1);
    rotations_++;
    // what was slot 0 is now the staging slot; its content is dropped
    Slot& s = staging();
    s.pixels.clear();
    s.is_virtual = false;
    s.occupied = false;
}

std::span<const int8_t> SliceBuffer::read_row(int i, int z) const {
    if (i < 0 || i >= k_ || z < 0 || z >= z_dim_) throw ConfigError("row index out of range");
    const Slot& s = slots_[size_t(physical(i))];
    if (!s.occupied) throw ProtocolError("read from an unloaded slice slot");
    if (s.is_virtual) return {zero_row_.data(), size_t(width_)};
    return {s.pixels.data() + size_t(z) * width_, size_t(width_)};
}

bool SliceBuffer::slot_is_virtual(int i) const {
    return slots_[size_t(physical(i))].is_virtual;
}

size_t SliceBuffer::resident_pixels() const {
    size_t total = 0;
    for (const auto& s : slots_) total += s.pixels.size();
    return total;
}

void select_window(std::span<const int8_t> v, int j, int k, std::span<int8_t> out) {
    const int half = k / 2;
    const int n = int(v.size());
    for (int x = 0; x < int(out.size()); x++) {
        int src = x + j - half;
        out[size_t(x)] = (src >= 0 && src < n) ? v[size_t(src)] : int8_t(0);
    }
}

BlmacArray::BlmacArray(int width, int acc_bits) : width_(width), acc_bits_(acc_bits) {
    if (width < 1) throw ConfigError("accumulator array width must be positive");
    if (acc_bits < 2 || acc_bits > 32) throw ConfigError("acc_bits must be in [2, 32]");
    mask_ = acc_bits == 32 ? 0xFFFFFFFFu : ((1u << acc_bits) - 1);
    acc_.assign(size_t(width), 0);
}

int32_t BlmacArray::wrap(int64_t v) const {
    uint32_t m = uint32_t(uint64_t(v)) & mask_;
    if (acc_bits_ < 32 && (m & (1u << (acc_bits_ - 1)))) m |= ~mask_;
    return int32_t(m);
}

void BlmacArray::reset() {
    std::fill(acc_.begin(), acc_.end(), 0);
}

void BlmacArray::step(std::span<const int8_t> pixels, int sign) {
    if (pixels.size() != size_t(width_)) throw ConfigError("pixel row does not span the array");
    for (int x = 0; x < width_; x++)
        acc_[size_t(x)] = wrap(int64_t(acc_[size_t(x)]) + int64_t(sign) * pixels[size_t(x)]);
}

void BlmacArray::step_window(std::span<const int8_t> row, int offset, int sign, int x_count) {
    if (row.empty()) return;  // virtual-zero slice
    const int n = int(row.size());
    for (int x = 0; x < x_count; x++) {
        int src = x + offset;
        if (src < 0 || src >= n) continue;
        acc_[size_t(x)] = wrap(int64_t(acc_[size_t(x)]) + int64_t(sign) * row[size_t(src)]);
    }
}

void BlmacArray::shift() {
    for (auto& a : acc_) a = wrap(int64_t(a) * 2);
}

TileArrangement arrange_tiles(int line_width, int array_width) {
    if (array_width < 32 || array_width % 32 != 0)
        throw ConfigError("array width must be a positive multiple of 32");
    if (line_width < 1 || line_width > array_width)
        throw ConfigError("line of " + std::to_string(line_width) +
                          " pixels exceeds the " + std::to_string(array_width) +
                          "-wide array; slice tiling is not supported");
    for (int groups = 32; groups >= 1; groups /= 2) {
        int group_width = array_width / groups;
        if (group_width >= line_width) return {groups, group_width};
    }
    return {1, array_width};
}

namespace {

// Streams input slices through the buffer following the load/compute
// protocol: K slices resident before the first output slice, the slot K
// load overlapping each computation, virtual zeros off both edges.
class SliceStreamer {
public:
    SliceStreamer(const FeatureMap& input, int k)
        : input_(input), buf_(k, input.dims_z(), input.dims_x()) {
        const int half = k / 2;
        for (int s = 0; s < k; s++) {
            push(int64_t(s) - half);
            buf_.rotate();
        }
        next_push_ = k - half;
    }

    SliceBuffer& buffer() { return buf_; }
    size_t peak_pixels() const { return peak_; }

    // Called after each output slice: stages the next input slice and
    // renames the slots.
    void advance(bool more_output_follows) {
        if (more_output_follows) push(next_push_++);
        buf_.rotate();
    }

private:
    void push(int64_t y) {
        if (y < 0 || y >= input_.dims_y()) {
            buf_.push_virtual_zero();
        } else {
            const int8_t* p = input_.slice(int(y));
            buf_.push({p, size_t(input_.dims_z()) * size_t(input_.dims_x())});
        }
        peak_ = std::max(peak_, buf_.resident_pixels());
    }

    const FeatureMap& input_;
    SliceBuffer buf_;
    int64_t next_push_ = 0;
    size_t peak_ = 0;
};

int64_t apply_overhead(int64_t base, const EngineOptions& opts) {
    return base + llround(double(base) * opts.overhead_percent / 100.0) + opts.overhead_fixed;
}

int64_t slice_load_cycles(const FeatureMap& input, const EngineOptions& opts) {
    if (opts.mem_bytes_per_cycle <= 0) return 0;
    double bytes = double(input.dims_x()) * double(input.dims_z());
    return int64_t(std::ceil(bytes / opts.mem_bytes_per_cycle));
}

// Output assembly with optional fused 2x2 maxpool. The pool stages at most
// one previous conv slice, mirroring the scale/maxpool unit's line buffer.
class OutputAssembler {
public:
    OutputAssembler(int x, int y, int o, int pool_stride) : x_(x), y_(y), pool_(pool_stride) {
        int out_x = pool_ == 2 ? x / 2 : x;
        int out_y = pool_ == 2 ? y / 2 : y;
        map_ = FeatureMap(out_x, out_y, o);
        if (pool_ != 0) prev_.assign(size_t(o) * size_t(x), 0);
        row_.assign(size_t(x), 0);
    }

    // Row o of conv slice y, already scaled to pixels.
    int8_t* row_buffer() { return row_.data(); }

    void commit_row(int y, int o) {
        if (pool_ == 0) {
            std::copy(row_.begin(), row_.end(), map_.row(y, o));
        } else if (pool_ == 2) {
            if (y % 2 == 0) {
                std::copy(row_.begin(), row_.end(), prev_.begin() + size_t(o) * size_t(x_));
            } else if (y / 2 < map_.dims_y()) {
                const int8_t* above = prev_.data() + size_t(o) * size_t(x_);
                int8_t* out = map_.row(y / 2, o);
                for (int xo = 0; xo < map_.dims_x(); xo++) {
                    int x0 = xo * 2;
                    int8_t m = std::max(above[x0], row_[size_t(x0)]);
                    if (x0 + 1 < x_) m = std::max({m, above[x0 + 1], row_[size_t(x0) + 1]});
                    out[xo] = m;
                }
            }
        } else {  // stride-1 pool: emit slice y-1 = max(slice y-1, slice y)
            int8_t* stage = prev_.data() + size_t(o) * size_t(x_);
            if (y > 0) pool1_emit(stage, row_.data(), map_.row(y - 1, o));
            std::copy(row_.begin(), row_.end(), stage);
            if (y == y_ - 1) pool1_emit(stage, stage, map_.row(y, o));
        }
    }

    FeatureMap take() { return std::move(map_); }

private:
    void pool1_emit(const int8_t* a, const int8_t* b, int8_t* out) {
        for (int x = 0; x < x_; x++) {
            int8_t m = std::max(a[x], b[x]);
            if (x + 1 < x_) m = std::max({m, a[x + 1], b[x + 1]});
            out[x] = m;
        }
    }

    int x_, y_, pool_;
    FeatureMap map_;
    std::vector<int8_t> prev_;
    std::vector<int8_t> row_;
};

void check_exact(const std::vector<int64_t>& shadow, int acc_bits, int x_count, int y, int o) {
    const int64_t lo = -(int64_t(1) << (acc_bits - 1));
    const int64_t hi = (int64_t(1) << (acc_bits - 1)) - 1;
    for (int x = 0; x < x_count; x++)
        if (shadow[size_t(x)] < lo || shadow[size_t(x)] > hi)
            throw AccumulatorOverflow("accumulator overflow beyond " + std::to_string(acc_bits) +
                                          " bits",
                                      x, y, o);
}

void validate_layer_geometry(const FeatureMap& input, int k, int z, int o,
                             std::span<const int32_t> biases, const TileArrangement& arrange) {
    if (k != 1 && k != 3) throw ConfigError("only 1x1 and 3x3 kernels are supported");
    if (input.dims_z() != z) throw ConfigError("input channels do not match kernel");
    if (int(biases.size()) != o) throw ConfigError("bias count does not match outputs");
    if (arrange.groups < 1 || arrange.group_width < 1)
        throw ConfigError("bad tile arrangement");
    if (input.dims_x() > arrange.group_width)
        throw ConfigError("line wider than the configured group width");
}

}  // namespace

LayerRunResult run_layer_blmac(const FeatureMap& input, const CompressedWeightStream& stream,
                               std::span<const int32_t> biases, const ScaleParams& scale,
                               const TileArrangement& arrange, const EngineOptions& opts) {
    validate_layer_geometry(input, stream.k, stream.z, stream.o, biases, arrange);
    scale.validate();
    const int x_dim = input.dims_x(), y_dim = input.dims_y();
    const int k = stream.k, o_dim = stream.o, half = k / 2;
    const int z_dim = stream.z;

    SliceStreamer streamer(input, k);
    BlmacArray array(arrange.group_width, opts.acc_bits);
    std::vector<int64_t> shadow(opts.exact_check ? size_t(arrange.group_width) : 0, 0);
    OutputAssembler assembler(x_dim, y_dim, o_dim, opts.fused_pool_stride);
    std::vector<int64_t> group_cycles(size_t(arrange.groups), 0);

    LayerRunResult result;
    const int64_t load_cycles = slice_load_cycles(input, opts);

    for (int y = 0; y < y_dim; y++) {
        std::fill(group_cycles.begin(), group_cycles.end(), 0);
        for (int o = 0; o < o_dim; o++) {
            int64_t& cycles = group_cycles[size_t(o % arrange.groups)];
            array.reset();
            if (opts.exact_check) std::fill(shadow.begin(), shadow.end(), 0);
            int lcnt = stream.n_b - 1;
            SymbolDecoder decoder(stream, o);
            uint64_t cursor = 0;
            for (;;) {
                RunSymbol sym = decoder.next();
                cycles++;
                if (sym.kind == RunSymbol::RUN) {
                    cursor += sym.zrun;
                    int j, i, z;
                    unflatten_index(uint32_t(cursor), k, z_dim, j, i, z);
                    cursor++;
                    auto row = streamer.buffer().read_row(i, z);
                    if (streamer.buffer().slot_is_virtual(i)) row = {};
                    array.step_window(row, j - half, sym.sign, x_dim);
                    if (opts.exact_check && !row.empty())
                        for (int x = 0; x < x_dim; x++) {
                            int src = x + j - half;
                            if (src >= 0 && src < x_dim)
                                shadow[size_t(x)] += int64_t(sym.sign) * row[size_t(src)];
                        }
                } else {
                    cursor = 0;  // the next bit layer rescans the flattened vector
                    if (lcnt > 0) {
                        array.shift();
                        if (opts.exact_check)
                            for (auto& s : shadow) s *= 2;
                        lcnt--;
                    } else {
                        break;  // row o of the output slice is ready
                    }
                }
            }
            result.decode_steps += decoder.steps();
            if (opts.exact_check) check_exact(shadow, opts.acc_bits, x_dim, y, o);
            int8_t* out_row = assembler.row_buffer();
            for (int x = 0; x < x_dim; x++)
                out_row[x] = apply_bias_activation_scale(array.acc(x), biases[size_t(o)], scale);
            assembler.commit_row(y, o);
        }
        int64_t base = *std::max_element(group_cycles.begin(), group_cycles.end());
        int64_t slice_cycles = std::max(apply_overhead(base, opts), load_cycles);
        result.cycles_per_slice.push_back(slice_cycles);
        result.cycles_map += slice_cycles;
        if (y == 0) {
            int64_t kernel_base = 0;
            for (int64_t c : group_cycles) kernel_base += c;
            result.cycles_kernel = apply_overhead(kernel_base, opts);
        }
        streamer.advance(y + 1 < y_dim);
    }
    result.peak_buffer_pixels = streamer.peak_pixels();
    result.output = assembler.take();
    return result;
}

LayerRunResult run_layer_mac(const FeatureMap& input, const QuantizedWeightTensor& w,
                             const ScaleParams& scale, const TileArrangement& arrange,
                             const EngineOptions& opts) {
    std::vector<int32_t> biases(size_t(w.o()));
    for (int o = 0; o < w.o(); o++) biases[size_t(o)] = w.bias(o);
    validate_layer_geometry(input, w.k(), w.z(), w.o(), biases, arrange);
    scale.validate();
    const int x_dim = input.dims_x(), y_dim = input.dims_y();
    const int k = w.k(), z_dim = w.z(), o_dim = w.o(), half = k / 2;

    // (ZRUN, W) event list per output index, in flatten order
    struct WeightEvent {
        uint32_t pos;
        int32_t weight;
    };
    std::vector<std::vector<WeightEvent>> events(static_cast<size_t>(o_dim));
    for (int o = 0; o < o_dim; o++)
        for (int i = 0; i < k; i++)
            for (int z = 0; z < z_dim; z++)
                for (int j = 0; j < k; j++) {
                    int32_t weight = w.at(j, i, z, o);
                    if (weight != 0)
                        events[size_t(o)].push_back({flatten_index(j, i, z, k, z_dim), weight});
                }

    SliceStreamer streamer(input, k);
    if (opts.acc_bits < 2 || opts.acc_bits > 32) throw ConfigError("acc_bits must be in [2, 32]");
    const uint32_t mask = opts.acc_bits == 32 ? 0xFFFFFFFFu : ((1u << opts.acc_bits) - 1);
    auto wrap = [&](int64_t v) -> int32_t {
        uint32_t m = uint32_t(uint64_t(v)) & mask;
        if (opts.acc_bits < 32 && (m & (1u << (opts.acc_bits - 1)))) m |= ~mask;
        return int32_t(m);
    };
    std::vector<int32_t> acc(size_t(x_dim), 0);
    std::vector<int64_t> shadow(opts.exact_check ? size_t(x_dim) : 0, 0);
    OutputAssembler assembler(x_dim, y_dim, o_dim, opts.fused_pool_stride);
    std::vector<int64_t> group_cycles(size_t(arrange.groups), 0);

    LayerRunResult result;
    const int64_t load_cycles = slice_load_cycles(input, opts);

    for (int y = 0; y < y_dim; y++) {
        std::fill(group_cycles.begin(), group_cycles.end(), 0);
        for (int o = 0; o < o_dim; o++) {
            int64_t& cycles = group_cycles[size_t(o % arrange.groups)];
            std::fill(acc.begin(), acc.end(), 0);
            if (opts.exact_check) std::fill(shadow.begin(), shadow.end(), 0);
            for (const auto& ev : events[size_t(o)]) {
                int j, i, z;
                unflatten_index(ev.pos, k, z_dim, j, i, z);
                auto row = streamer.buffer().read_row(i, z);
                bool zero = streamer.buffer().slot_is_virtual(i);
                cycles++;
                if (!zero)
                    for (int x = 0; x < x_dim; x++) {
                        int src = x + j - half;
                        if (src < 0 || src >= x_dim) continue;
                        int64_t add = int64_t(ev.weight) * row[size_t(src)];
                        acc[size_t(x)] = wrap(acc[size_t(x)] + add);
                        if (opts.exact_check) shadow[size_t(x)] += add;
                    }
            }
            result.decode_steps += int64_t(events[size_t(o)].size()) + 1;  // runs + EOR
            if (opts.exact_check) check_exact(shadow, opts.acc_bits, x_dim, y, o);
            int8_t* out_row = assembler.row_buffer();
            for (int x = 0; x < x_dim; x++)
                out_row[x] = apply_bias_activation_scale(acc[size_t(x)], w.bias(o), scale);
            assembler.commit_row(y, o);
        }
        int64_t base = *std::max_element(group_cycles.begin(), group_cycles.end());
        int64_t slice_cycles = std::max(apply_overhead(base, opts), load_cycles);
        result.cycles_per_slice.push_back(slice_cycles);
        result.cycles_map += slice_cycles;
        if (y == 0) {
            int64_t kernel_base = 0;
            for (int64_t c : group_cycles) kernel_base += c;
            result.cycles_kernel = apply_overhead(kernel_base, opts);
        }
        streamer.advance(y + 1 < y_dim);
    }
    result.peak_buffer_pixels = streamer.peak_pixels();
    result.output = assembler.take();
    return result;
}

}  // namespace blsim
