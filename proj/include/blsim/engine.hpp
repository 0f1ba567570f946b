// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "blsim/tensor.hpp"
#include "blsim/weight_codec.hpp"

namespace blsim {

// On-chip cache of K+1 feature-map slices. Incoming slices always land in
// logical slot K; rotation renames slots by moving a base pointer, never
// pixel data. A slot can be marked VIRTUAL_ZERO instead of holding pixels,
// which is how the kernel rows that fall off the top/bottom edge read as
// zeros.
class SliceBuffer {
public:
    SliceBuffer(int k, int z_dim, int width);

    int k() const { return k_; }
    int z_dim() const { return z_dim_; }
    int width() const { return width_; }

    // Stores a slice (Z rows of X pixels) in logical slot K. The slot must
    // be free, i.e. rotate() must have run since the previous push.
    void push(std::span<const int8_t> slice);
    void push_virtual_zero();

    // Logical slot n takes the content previously at n+1; the old slot 0
    // becomes the free slot K. Pointer arithmetic only.
    void rotate();

    // Row (slot i, channel z), X pixels. All zeros when the slot is
    // VIRTUAL_ZERO.
    std::span<const int8_t> read_row(int i, int z) const;
    bool slot_is_virtual(int i) const;

    // Pixels currently stored (virtual and free slots count zero).
    size_t resident_pixels() const;

    // Slice coordinate at the kernel centre (slot K/2) once computation is
    // in steady state; negative during prefill.
    int64_t y_current() const { return rotations_ - k_; }

private:
    struct Slot {
        std::vector<int8_t> pixels;
        bool is_virtual = false;
        bool occupied = false;
    };
    int physical(int logical) const { return (base_ + logical) % (k_ + 1); }
    Slot& staging() { return slots_[size_t(physical(k_))]; }

    int k_, z_dim_, width_;
    int base_ = 0;
    int64_t rotations_ = 0;
    std::vector<Slot> slots_;
    std::vector<int8_t> zero_row_;
};

// Mux tap of architecture figure: pads v with K/2 zeros on both sides and
// selects X pixels starting at offset j.
void select_window(std::span<const int8_t> v, int j, int k, std::span<int8_t> out);

// A row of add/sub accumulators with a x2 shift input. Values wrap modulo
// 2^acc_bits (two's complement), as fixed-width hardware does.
class BlmacArray {
public:
    BlmacArray(int width, int acc_bits = 20);

    int width() const { return width_; }
    int acc_bits() const { return acc_bits_; }

    void reset();
    // acc[x] += sign * pixels[x]; pixels must span the full width.
    void step(std::span<const int8_t> pixels, int sign);
    // acc[x] += sign * row[x + offset], out-of-range taps read zero. An
    // empty row stands for a virtual-zero slice and leaves acc unchanged.
    void step_window(std::span<const int8_t> row, int offset, int sign, int x_count);
    // acc[x] *= 2
    void shift();

    int32_t acc(int x) const { return acc_[size_t(x)]; }

private:
    int32_t wrap(int64_t v) const;
    int width_;
    int acc_bits_;
    uint32_t mask_;
    std::vector<int32_t> acc_;
};

// How the 32 tiles gang up: `groups` arrays of `group_width` accumulators
// working the same line in parallel, splitting the output indexes.
struct TileArrangement {
    int groups = 1;
    int group_width = 416;
};

// Smallest power-of-two split of the array whose group still covers the
// line. array_width must be a multiple of 32.
TileArrangement arrange_tiles(int line_width, int array_width = 416);

struct EngineOptions {
    int acc_bits = 20;
    bool exact_check = false;        // diagnose results that overflow acc_bits
    double overhead_percent = 12.0;  // merger/scale pipeline allowance
    int64_t overhead_fixed = 0;
    double mem_bytes_per_cycle = 0.0;  // 0: slice loading not modeled
    int fused_pool_stride = 0;         // 0: none, else 2x2 maxpool stride 1 or 2
};

struct LayerRunResult {
    FeatureMap output;
    std::vector<int64_t> cycles_per_slice;  // one entry per computed conv slice
    int64_t cycles_map = 0;
    int64_t cycles_kernel = 0;  // one output column, all o: sum of N_3(o)+N_b plus overhead
    int64_t decode_steps = 0;   // run symbols consumed, EORs included
    size_t peak_buffer_pixels = 0;
};

// Architecture II: bit-layer accumulation driven by the compressed stream.
// Output pixels are bit-identical to conv2d_reference followed by the same
// scale stage whenever the accumulator width is not exceeded.
LayerRunResult run_layer_blmac(const FeatureMap& input, const CompressedWeightStream& stream,
                               std::span<const int32_t> biases, const ScaleParams& scale,
                               const TileArrangement& arrange, const EngineOptions& opts = {});

// Architecture I: one multiply-accumulate row per nonzero weight.
LayerRunResult run_layer_mac(const FeatureMap& input, const QuantizedWeightTensor& w,
                             const ScaleParams& scale, const TileArrangement& arrange,
                             const EngineOptions& opts = {});

}  // namespace blsim
