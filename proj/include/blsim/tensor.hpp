// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "blsim/common.hpp"

namespace blsim {

// 3D map of 8-bit pixels, [X, Y, Z]. A "slice" is all pixels with one y
// coordinate (Z rows of X pixels); storage is slice-major so a slice is
// contiguous: index (x, y, z) -> (y*Z + z)*X + x.
class FeatureMap {
public:
    FeatureMap() = default;
    FeatureMap(int x, int y, int z, int8_t fill = 0);

    int dims_x() const { return x_; }
    int dims_y() const { return y_; }
    int dims_z() const { return z_; }
    size_t pixel_count() const { return data_.size(); }

    int8_t at(int x, int y, int z) const { return data_[index(x, y, z)]; }
    int8_t& at(int x, int y, int z) { return data_[index(x, y, z)]; }

    // Row (fixed y, z): X contiguous pixels.
    const int8_t* row(int y, int z) const { return data_.data() + index(0, y, z); }
    int8_t* row(int y, int z) { return data_.data() + index(0, y, z); }
    // Slice (fixed y): Z*X contiguous pixels.
    const int8_t* slice(int y) const { return data_.data() + size_t(y) * z_ * x_; }

    const std::vector<int8_t>& data() const { return data_; }
    std::vector<int8_t>& data() { return data_; }

    bool same_dims(const FeatureMap& other) const {
        return x_ == other.x_ && y_ == other.y_ && z_ == other.z_;
    }
    bool operator==(const FeatureMap& other) const = default;

    // Binary form: 16-byte header (magic "FMAP", u32 LE X, Y, Z), then
    // X*Y*Z pixel bytes, x fastest, then z, then y.
    std::vector<uint8_t> serialize() const;
    static FeatureMap deserialize(const uint8_t* data, size_t size);
    void save(const std::string& path) const;
    static FeatureMap load(const std::string& path);

private:
    size_t index(int x, int y, int z) const { return (size_t(y) * z_ + z) * x_ + x; }
    int x_ = 0, y_ = 0, z_ = 0;
    std::vector<int8_t> data_;
};

// Integer weights W[j][i][z][o] and per-o biases. Kernel is K x K (K odd
// or 1), stride fixed at 1. j indexes the kernel column, i the kernel row.
class QuantizedWeightTensor {
public:
    QuantizedWeightTensor() = default;
    QuantizedWeightTensor(int k, int z, int o);

    int k() const { return k_; }
    int z() const { return z_; }
    int o() const { return o_; }
    int stride_x() const { return 1; }
    int stride_y() const { return 1; }

    int32_t at(int j, int i, int z, int o) const { return weights_[index(j, i, z, o)]; }
    int32_t& at(int j, int i, int z, int o) { return weights_[index(j, i, z, o)]; }
    int32_t bias(int o) const { return biases_[o]; }
    int32_t& bias(int o) { return biases_[o]; }

    size_t weight_count() const { return weights_.size(); }
    int frac_bits() const { return frac_bits_; }
    void set_frac_bits(int fb) { frac_bits_ = fb; }

    bool operator==(const QuantizedWeightTensor& other) const = default;

private:
    size_t index(int j, int i, int z, int o) const {
        return ((size_t(o) * k_ + j) * k_ + i) * z_ + z;
    }
    int k_ = 0, z_ = 0, o_ = 0;
    int frac_bits_ = 0;  // scaling metadata from quantization, 0 for raw integers
    std::vector<int32_t> weights_;
    std::vector<int32_t> biases_;
};

// Leaky-ReLU slope (num / 2^shift), output rescale and bias placement for
// the scale stage that maps wide accumulators back to 8-bit pixels.
struct ScaleParams {
    int32_t leaky_num = 26;  // 26/256 ~ 0.1016
    int leaky_shift = 8;
    int32_t out_mult = 1;
    int out_shift = 0;
    bool bias_pre_activation = true;

    void validate() const;
};

// Wide accumulators, dims [X, Y, O]; the raw convolution result before the
// scale stage.
struct AccumulatorMap {
    int x = 0, y = 0, o = 0;
    std::vector<int64_t> data;

    int64_t at(int xi, int yi, int oi) const { return data[(size_t(yi) * o + oi) * x + xi]; }
    int64_t& at(int xi, int yi, int oi) { return data[(size_t(yi) * o + oi) * x + xi]; }
};

// Direct evaluation of the convolution sum with zero padding: nested loops,
// no sparsity logic. This is the reference every engine path is checked
// against.
AccumulatorMap conv2d_reference(const FeatureMap& input, const QuantizedWeightTensor& w);

// acc + bias, leaky ReLU on the negative side, then multiply/shift back to
// a saturated 8-bit pixel. Rounding is half away from zero. Both engine
// architectures produce accumulators without the bias, so it is added here.
int8_t apply_bias_activation_scale(int64_t acc, int32_t bias, const ScaleParams& p);

// Scale stage over a whole accumulator map. conv2d_reference accumulators
// already carry their bias, so none is added.
FeatureMap scale_map(const AccumulatorMap& acc, const ScaleParams& p);

// 2x2 max pooling. Stride 2 halves X and Y (integer division); stride 1
// keeps dims, with the window clamped to the map at the far edges.
FeatureMap maxpool2x2(const FeatureMap& input, int stride);

// Nearest-neighbour 2x upsample.
FeatureMap upsample2x(const FeatureMap& input);

// Channel concatenation; operands must share X and Y.
FeatureMap concat_z(const FeatureMap& a, const FeatureMap& b);

// K*K*Z*O: multiply-accumulate count to apply one kernel.
int64_t macs_per_kernel(int k, int z, int o);

// round(w * 2^frac_bits) saturated to [-max_abs, max_abs].
QuantizedWeightTensor quantize_weights_uniform(const std::vector<float>& weights,
                                               const std::vector<float>& biases, int k, int z,
                                               int o, int frac_bits, int32_t max_abs = 127);
int32_t quantize_value(float v, int frac_bits, int32_t max_abs = 127);

}  // namespace blsim
