// SPDX-License-Identifier: Apache-2.0
#include "blsim/weight_codec.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

#include "blsim/io.hpp"

namespace blsim {

namespace {

constexpr uint32_t kTopValue = 1u << 24;

// Binary arithmetic encoder: 32-bit low/range, byte-wise renormalization,
// carries resolved by walking back over already-emitted bytes.
class BinEncoder {
public:
    void encode_bit(int bit, uint16_t prob_one) {
        uint32_t bound = (range_ >> 16) * prob_one;
        step(bit, bound);
    }

    void encode_bypass(int bit) { step(bit, range_ >> 1); }

    // Closes the stream: appends the shortest low-value suffix (at most 4
    // bytes) such that a decoder padding with zero bytes lands inside the
    // final interval.
    std::vector<uint8_t> finish() {
        for (int zero_bytes = 4; zero_bytes >= 0; zero_bytes--) {
            uint64_t step_size = uint64_t(1) << (8 * zero_bytes);
            uint64_t v = (low_ + step_size - 1) / step_size * step_size;
            if (v >= low_ + range_) continue;
            if (v > 0xFFFFFFFFull) {
                propagate_carry();
                v &= 0xFFFFFFFFull;
            }
            for (int b = 3; b >= zero_bytes; b--) out_.push_back(uint8_t(v >> (8 * b)));
            break;
        }
        return std::move(out_);
    }

private:
    void step(int bit, uint32_t bound) {
        if (bit) {
            range_ = bound;
        } else {
            low_ += bound;
            if (low_ > 0xFFFFFFFFull) {
                propagate_carry();
                low_ &= 0xFFFFFFFFull;
            }
            range_ -= bound;
        }
        while (range_ < kTopValue) {
            out_.push_back(uint8_t(low_ >> 24));
            low_ = (low_ << 8) & 0xFFFFFFFFull;
            range_ <<= 8;
        }
    }

    void propagate_carry() {
        size_t i = out_.size();
        while (i > 0 && ++out_[i - 1] == 0) i--;
    }

    std::vector<uint8_t> out_;
    uint64_t low_ = 0;
    uint32_t range_ = 0xFFFFFFFFu;
};

int prefix_length(uint32_t zrun) {
    return std::bit_width(zrun + 1) - 1;
}

const ProbabilityModel::Context& pick_context(const ProbabilityModel& model, bool layer_has_run) {
    return model.contexts[layer_has_run ? 1 : 0];
}

uint16_t prefix_prob(const ProbabilityModel::Context& ctx, int position) {
    return ctx.prefix[std::min(position, ProbabilityModel::kPrefixBins - 1)];
}

void encode_symbol(BinEncoder& enc, const RunSymbol& sym, const ProbabilityModel& model,
                   bool& layer_has_run) {
    const auto& ctx = pick_context(model, layer_has_run);
    if (sym.kind == RunSymbol::EOR) {
        enc.encode_bit(1, ctx.eor);
        layer_has_run = false;
        return;
    }
    enc.encode_bit(0, ctx.eor);
    uint32_t n = sym.zrun + 1;
    int k = prefix_length(sym.zrun);
    for (int t = 0; t < k; t++) enc.encode_bit(1, prefix_prob(ctx, t));
    enc.encode_bit(0, prefix_prob(ctx, k));
    for (int b = k - 1; b >= 0; b--) enc.encode_bypass(int(n >> b) & 1);
    enc.encode_bypass(sym.sign > 0 ? 1 : 0);
    layer_has_run = true;
}

}  // namespace

uint16_t ProbabilityModel::prob_from_counts(uint64_t ones, uint64_t total) {
    if (total == 0) return 0x8000;
    uint64_t scaled = (ones * 65536 + total / 2) / total;
    return uint16_t(std::clamp<uint64_t>(scaled, kMinProb, kMaxProb));
}

void ProbabilityModel::validate() const {
    for (const auto& ctx : contexts) {
        if (ctx.eor < kMinProb) throw StreamError("probability outside (0, 2^16)");
        for (uint16_t p : ctx.prefix)
            if (p < kMinProb) throw StreamError("probability outside (0, 2^16)");
    }
}

ProbabilityModel estimate_model(const std::vector<BitLayerPlan>& plans) {
    if (plans.empty()) throw ConfigError("cannot estimate a model from no plans");
    struct BinCount {
        uint64_t ones = 0;
        uint64_t total = 0;
    };
    struct ContextCount {
        BinCount eor;
        BinCount prefix[ProbabilityModel::kPrefixBins];
    } counts[2];

    for (const auto& plan : plans) {
        bool layer_has_run = false;
        for (const auto& layer : plan.layers) {
            for (const auto& sym : layer) {
                auto& ctx = counts[layer_has_run ? 1 : 0];
                ctx.eor.total++;
                if (sym.kind == RunSymbol::EOR) {
                    ctx.eor.ones++;
                    layer_has_run = false;
                    continue;
                }
                int k = prefix_length(sym.zrun);
                for (int t = 0; t <= k; t++) {
                    auto& bin = ctx.prefix[std::min(t, ProbabilityModel::kPrefixBins - 1)];
                    bin.total++;
                    if (t < k) bin.ones++;
                }
                layer_has_run = true;
            }
        }
    }

    ProbabilityModel model;
    for (int c = 0; c < 2; c++) {
        model.contexts[c].eor =
            ProbabilityModel::prob_from_counts(counts[c].eor.ones, counts[c].eor.total);
        for (int t = 0; t < ProbabilityModel::kPrefixBins; t++)
            model.contexts[c].prefix[t] = ProbabilityModel::prob_from_counts(
                counts[c].prefix[t].ones, counts[c].prefix[t].total);
    }
    return model;
}

std::vector<RunSymbol> rle_encode_layer(const std::vector<std::pair<uint32_t, int>>& events,
                                        uint32_t flatten_len) {
    auto sorted = events;
    std::sort(sorted.begin(), sorted.end());
    std::vector<RunSymbol> out;
    out.reserve(sorted.size() + 1);
    uint32_t prev_end = 0;
    for (const auto& [pos, sign] : sorted) {
        if (pos >= flatten_len) throw ConfigError("event position past flatten length");
        out.push_back(RunSymbol::run(pos - prev_end, sign));
        prev_end = pos + 1;
    }
    out.push_back(RunSymbol::eor());
    return out;
}

std::vector<std::pair<uint32_t, int>> rle_decode_layer(const std::vector<RunSymbol>& symbols,
                                                       uint32_t flatten_len) {
    std::vector<std::pair<uint32_t, int>> out;
    uint64_t cursor = 0;
    for (size_t s = 0; s < symbols.size(); s++) {
        const auto& sym = symbols[s];
        if (sym.kind == RunSymbol::EOR) {
            if (s + 1 != symbols.size()) throw StreamError("EOR before end of symbol list");
            return out;
        }
        cursor += sym.zrun;
        if (cursor >= flatten_len) throw StreamError("run past end of flattened kernel");
        out.push_back({uint32_t(cursor), sym.sign});
        cursor++;
    }
    throw StreamError("symbol list not EOR-terminated");
}

CompressedWeightStream ac_encode(const std::vector<BitLayerPlan>& plans,
                                 const ProbabilityModel& model) {
    if (plans.empty()) throw ConfigError("no plans to encode");
    model.validate();
    const auto& first = plans.front();
    CompressedWeightStream stream;
    stream.k = first.k;
    stream.z = first.z;
    stream.o = int(plans.size());
    stream.n_b = first.n_b;
    stream.model = model;

    stream.payload_offsets.push_back(0);
    for (int o = 0; o < stream.o; o++) {
        const auto& plan = plans[size_t(o)];
        if (plan.o != o) throw ConfigError("plans must cover o = 0..O-1 in order");
        if (plan.n_b != stream.n_b || plan.k != stream.k || plan.z != stream.z)
            throw ConfigError("plans disagree on geometry or layer count");
        if (int(plan.layers.size()) != plan.n_b) throw ConfigError("plan layer count mismatch");

        BinEncoder enc;
        bool layer_has_run = false;
        for (const auto& layer : plan.layers) {
            if (layer.empty() || layer.back().kind != RunSymbol::EOR)
                throw ConfigError("bit layer not EOR-terminated");
            for (const auto& sym : layer) encode_symbol(enc, sym, model, layer_has_run);
        }
        auto bytes = enc.finish();
        stream.payload.insert(stream.payload.end(), bytes.begin(), bytes.end());
        stream.payload_offsets.push_back(uint32_t(stream.payload.size()));
    }
    return stream;
}

SymbolDecoder::SymbolDecoder(const CompressedWeightStream& stream, int o_index) {
    if (o_index < 0 || o_index >= stream.o) throw ConfigError("output index out of range");
    payload_ = stream.payload.data() + stream.payload_offsets[size_t(o_index)];
    payload_size_ = stream.payload_bytes(o_index);
    model_ = &stream.model;
    flatten_len_ = stream.flatten_len();
    n_b_ = stream.n_b;
    for (int i = 0; i < 4; i++) code_ = (code_ << 8) | next_byte();
}

uint8_t SymbolDecoder::next_byte() {
    if (pos_ < payload_size_) return payload_[pos_++];
    // the encoder drops trailing zero bytes of the 4-byte flush; anything
    // past that means the payload was cut
    if (++zero_fill_ > 4) throw StreamError("payload exhausted", int64_t(pos_));
    return 0;
}

int SymbolDecoder::decode_bit(uint16_t prob_one) {
    uint32_t bound = (range_ >> 16) * prob_one;
    int bit;
    if (code_ < bound) {
        bit = 1;
        range_ = bound;
    } else {
        bit = 0;
        code_ -= bound;
        range_ -= bound;
    }
    while (range_ < kTopValue) {
        code_ = (code_ << 8) | next_byte();
        range_ <<= 8;
    }
    return bit;
}

int SymbolDecoder::decode_bypass() {
    uint32_t bound = range_ >> 1;
    int bit;
    if (code_ < bound) {
        bit = 1;
        range_ = bound;
    } else {
        bit = 0;
        code_ -= bound;
        range_ -= bound;
    }
    while (range_ < kTopValue) {
        code_ = (code_ << 8) | next_byte();
        range_ <<= 8;
    }
    return bit;
}

RunSymbol SymbolDecoder::next() {
    if (done()) throw StreamError("decode past final EOR", int64_t(pos_));
    const auto& ctx = pick_context(*model_, layer_has_run_);
    steps_++;
    if (decode_bit(ctx.eor)) {
        layers_done_++;
        layer_has_run_ = false;
        cursor_ = 0;
        return RunSymbol::eor();
    }
    int k = 0;
    while (decode_bit(prefix_prob(ctx, k))) {
        if (++k > 30) throw StreamError("run prefix overlong", int64_t(pos_));
    }
    uint32_t n = 1;
    for (int b = 0; b < k; b++) n = (n << 1) | uint32_t(decode_bypass());
    uint32_t zrun = n - 1;
    int sign = decode_bypass() ? 1 : -1;
    cursor_ += zrun;
    if (cursor_ >= flatten_len_) throw StreamError("run past end of flattened kernel", int64_t(pos_));
    cursor_++;
    layer_has_run_ = true;
    return RunSymbol::run(zrun, sign);
}

DecodedPlan ac_decode(const CompressedWeightStream& stream, int o_index) {
    SymbolDecoder dec(stream, o_index);
    DecodedPlan out;
    out.plan.o = o_index;
    out.plan.n_b = stream.n_b;
    out.plan.k = stream.k;
    out.plan.z = stream.z;
    out.plan.flatten_len = stream.flatten_len();
    out.plan.layers.resize(size_t(stream.n_b));
    for (auto& layer : out.plan.layers) {
        for (;;) {
            RunSymbol sym = dec.next();
            layer.push_back(sym);
            if (sym.kind == RunSymbol::EOR) break;
        }
    }
    out.decode_steps = dec.steps();
    return out;
}

std::vector<uint8_t> CompressedWeightStream::serialize() const {
    std::vector<uint8_t> out;
    out.insert(out.end(), {'B', 'L', 'W', 'S'});
    io::put_u16(out, kFormatVersion);
    io::put_u16(out, uint16_t(k));
    io::put_u32(out, uint32_t(z));
    io::put_u32(out, uint32_t(o));
    out.push_back(uint8_t(n_b));
    out.push_back(uint8_t(order));
    const int words = 2 * (1 + ProbabilityModel::kPrefixBins);
    io::put_u16(out, uint16_t(words));
    for (const auto& ctx : model.contexts) {
        io::put_u16(out, ctx.eor);
        for (uint16_t p : ctx.prefix) io::put_u16(out, p);
    }
    for (uint32_t off : payload_offsets) io::put_u32(out, off);
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

CompressedWeightStream CompressedWeightStream::deserialize(const uint8_t* data, size_t size) {
    io::ByteReader r(data, size);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, "BLWS", 4) != 0) throw StreamError("bad stream magic");
    if (r.u16() != kFormatVersion) throw StreamError("unsupported stream version");
    CompressedWeightStream s;
    s.k = r.u16();
    s.z = int(r.u32());
    s.o = int(r.u32());
    s.n_b = r.u8();
    uint8_t order_id = r.u8();
    if (s.k < 1 || s.k % 2 == 0 || s.z < 1 || s.o < 1 || s.o > (1 << 20))
        throw StreamError("bad stream geometry");
    if (s.n_b < 1 || s.n_b > 32) throw StreamError("bad bit-layer count");
    if (order_id != uint8_t(FlattenOrder::RowGrouped_IZJ))
        throw StreamError("unknown flatten order");
    s.order = FlattenOrder(order_id);
    if (r.u16() != 2 * (1 + ProbabilityModel::kPrefixBins))
        throw StreamError("bad probability table size");
    for (auto& ctx : s.model.contexts) {
        ctx.eor = r.u16();
        for (auto& p : ctx.prefix) p = r.u16();
    }
    s.model.validate();
    s.payload_offsets.resize(size_t(s.o) + 1);
    for (auto& off : s.payload_offsets) off = r.u32();
    if (s.payload_offsets.front() != 0) throw StreamError("payload offsets must start at 0");
    for (size_t i = 1; i < s.payload_offsets.size(); i++)
        if (s.payload_offsets[i] < s.payload_offsets[i - 1])
            throw StreamError("payload offsets not monotone");
    if (r.remaining() != s.payload_offsets.back())
        throw StreamError("payload size does not match offsets");
    s.payload.resize(r.remaining());
    if (!s.payload.empty()) r.bytes(s.payload.data(), s.payload.size());
    return s;
}

void CompressedWeightStream::save(const std::string& path) const {
    io::write_file_atomic(path, serialize());
}

CompressedWeightStream CompressedWeightStream::load(const std::string& path) {
    auto buf = io::read_file(path);
    return deserialize(buf.data(), buf.size());
}

}  // namespace blsim
