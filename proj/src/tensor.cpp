// SPDX-License-Identifier: Apache-2.0
#include "blsim/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "blsim/io.hpp"

namespace blsim {

FeatureMap::FeatureMap(int x, int y, int z, int8_t fill) : x_(x), y_(y), z_(z) {
    if (x <= 0 || y <= 0 || z <= 0) throw ConfigError("feature map dims must be positive");
    data_.assign(size_t(x) * y * z, fill);
}

std::vector<uint8_t> FeatureMap::serialize() const {
    std::vector<uint8_t> out;
    out.reserve(16 + data_.size());
    out.insert(out.end(), {'F', 'M', 'A', 'P'});
    io::put_u32(out, uint32_t(x_));
    io::put_u32(out, uint32_t(y_));
    io::put_u32(out, uint32_t(z_));
    const uint8_t* p = reinterpret_cast<const uint8_t*>(data_.data());
    out.insert(out.end(), p, p + data_.size());
    return out;
}

FeatureMap FeatureMap::deserialize(const uint8_t* data, size_t size) {
    io::ByteReader r(data, size);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, "FMAP", 4) != 0) throw IoError("bad feature map magic");
    uint32_t x = r.u32(), y = r.u32(), z = r.u32();
    if (x == 0 || y == 0 || z == 0 || uint64_t(x) * y * z > (1ull << 31))
        throw IoError("bad feature map dims");
    FeatureMap m(static_cast<int>(x), static_cast<int>(y), static_cast<int>(z));
    if (r.remaining() != m.data_.size()) throw IoError("feature map payload size mismatch");
    r.bytes(m.data_.data(), m.data_.size());
    return m;
}

void FeatureMap::save(const std::string& path) const {
    io::write_file_atomic(path, serialize());
}

FeatureMap FeatureMap::load(const std::string& path) {
    auto buf = io::read_file(path);
    return deserialize(buf.data(), buf.size());
}

QuantizedWeightTensor::QuantizedWeightTensor(int k, int z, int o) : k_(k), z_(z), o_(o) {
    if (k < 1 || k % 2 == 0) throw ConfigError("kernel size must be odd or 1");
    if (z < 1 || o < 1) throw ConfigError("channel counts must be positive");
    weights_.assign(size_t(k) * k * z * o, 0);
    biases_.assign(size_t(o), 0);
}

void ScaleParams::validate() const {
    if (leaky_shift < 0 || leaky_num <= 0 || int64_t(leaky_num) >= (int64_t(1) << leaky_shift))
        throw ConfigError("leaky slope must be in (0, 1)");
    if (out_shift < 0) throw ConfigError("out_shift must be >= 0");
}

AccumulatorMap conv2d_reference(const FeatureMap& input, const QuantizedWeightTensor& w) {
    if (input.dims_z() != w.z()) throw ConfigError("conv input channels do not match kernel");
    const int x_dim = input.dims_x(), y_dim = input.dims_y();
    const int k = w.k(), z_dim = w.z(), o_dim = w.o(), half = w.k() / 2;

    AccumulatorMap out;
    out.x = x_dim;
    out.y = y_dim;
    out.o = o_dim;
    out.data.assign(size_t(x_dim) * y_dim * o_dim, 0);

    for (int y = 0; y < y_dim; y++) {
        for (int o = 0; o < o_dim; o++) {
            for (int x = 0; x < x_dim; x++) {
                int64_t acc = w.bias(o);
                for (int z = 0; z < z_dim; z++)
                    for (int i = 0; i < k; i++)
                        for (int j = 0; j < k; j++) {
                            int yy = y + i - half;
                            int xx = x + j - half;
                            if (xx < 0 || xx >= x_dim || yy < 0 || yy >= y_dim) continue;
                            acc += int64_t(input.at(xx, yy, z)) * w.at(j, i, z, o);
                        }
                out.at(x, y, o) = acc;
            }
        }
    }
    return out;
}

int8_t apply_bias_activation_scale(int64_t acc, int32_t bias, const ScaleParams& p) {
    int64_t v = p.bias_pre_activation ? acc + bias : acc;
    if (v < 0) v = (v * p.leaky_num) >> p.leaky_shift;  // arithmetic shift, floors
    if (!p.bias_pre_activation) v += bias;
    int64_t scaled = v * p.out_mult;
    if (p.out_shift > 0) {
        // round half away from zero
        int64_t half = int64_t(1) << (p.out_shift - 1);
        int64_t mag = (std::abs(scaled) + half) >> p.out_shift;
        scaled = scaled < 0 ? -mag : mag;
    }
    return int8_t(std::clamp<int64_t>(scaled, -128, 127));
}

FeatureMap scale_map(const AccumulatorMap& acc, const ScaleParams& p) {
    FeatureMap out(acc.x, acc.y, acc.o);
    for (int y = 0; y < acc.y; y++)
        for (int o = 0; o < acc.o; o++)
            for (int x = 0; x < acc.x; x++)
                out.at(x, y, o) = apply_bias_activation_scale(acc.at(x, y, o), 0, p);
    return out;
}

FeatureMap maxpool2x2(const FeatureMap& input, int stride) {
    if (stride != 1 && stride != 2) throw ConfigError("maxpool stride must be 1 or 2");
    const int x_in = input.dims_x(), y_in = input.dims_y(), z_dim = input.dims_z();
    const int x_out = stride == 2 ? x_in / 2 : x_in;
    const int y_out = stride == 2 ? y_in / 2 : y_in;
    FeatureMap out(x_out, y_out, z_dim);
    for (int y = 0; y < y_out; y++)
        for (int z = 0; z < z_dim; z++)
            for (int x = 0; x < x_out; x++) {
                int x0 = x * stride, y0 = y * stride;
                int8_t m = input.at(x0, y0, z);
                if (x0 + 1 < x_in) m = std::max(m, input.at(x0 + 1, y0, z));
                if (y0 + 1 < y_in) m = std::max(m, input.at(x0, y0 + 1, z));
                if (x0 + 1 < x_in && y0 + 1 < y_in) m = std::max(m, input.at(x0 + 1, y0 + 1, z));
                out.at(x, y, z) = m;
            }
    return out;
}

FeatureMap upsample2x(const FeatureMap& input) {
    FeatureMap out(input.dims_x() * 2, input.dims_y() * 2, input.dims_z());
    for (int y = 0; y < out.dims_y(); y++)
        for (int z = 0; z < out.dims_z(); z++)
            for (int x = 0; x < out.dims_x(); x++)
                out.at(x, y, z) = input.at(x / 2, y / 2, z);
    return out;
}

FeatureMap concat_z(const FeatureMap& a, const FeatureMap& b) {
    if (a.dims_x() != b.dims_x() || a.dims_y() != b.dims_y())
        throw ConfigError("concat operands must share X and Y");
    FeatureMap out(a.dims_x(), a.dims_y(), a.dims_z() + b.dims_z());
    for (int y = 0; y < out.dims_y(); y++) {
        for (int z = 0; z < a.dims_z(); z++)
            std::memcpy(out.row(y, z), a.row(y, z), size_t(a.dims_x()));
        for (int z = 0; z < b.dims_z(); z++)
            std::memcpy(out.row(y, a.dims_z() + z), b.row(y, z), size_t(b.dims_x()));
    }
    return out;
}

int64_t macs_per_kernel(int k, int z, int o) {
    if (k < 1 || z < 1 || o < 1) throw ConfigError("kernel dims must be >= 1");
    return int64_t(k) * k * z * o;
}

int32_t quantize_value(float v, int frac_bits, int32_t max_abs) {
    double scaled = double(v) * double(int64_t(1) << frac_bits);
    double rounded = scaled >= 0 ? std::floor(scaled + 0.5) : std::ceil(scaled - 0.5);
    rounded = std::clamp(rounded, double(-max_abs), double(max_abs));
    return int32_t(rounded);
}

QuantizedWeightTensor quantize_weights_uniform(const std::vector<float>& weights,
                                               const std::vector<float>& biases, int k, int z,
                                               int o, int frac_bits, int32_t max_abs) {
    if (frac_bits < 0) throw ConfigError("frac_bits must be >= 0");
    QuantizedWeightTensor t(k, z, o);
    if (weights.size() != t.weight_count()) throw ConfigError("weight count mismatch");
    if (biases.size() != size_t(o)) throw ConfigError("bias count mismatch");
    size_t idx = 0;
    for (int oi = 0; oi < o; oi++)
        for (int i = 0; i < k; i++)
            for (int zi = 0; zi < z; zi++)
                for (int j = 0; j < k; j++)
                    t.at(j, i, zi, oi) = quantize_value(weights[idx++], frac_bits, max_abs);
    for (int oi = 0; oi < o; oi++)
        // biases feed the accumulator directly, so they share the weight scale
        // but not its saturation range
        t.bias(oi) = quantize_value(biases[oi], frac_bits, INT32_MAX / 2);
    t.set_frac_bits(frac_bits);
    return t;
}

}  // namespace blsim
