// SPDX-License-Identifier: Apache-2.0
#include "blsim/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace blsim {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

int64_t parse_int(const std::string& s, const std::string& what) {
    int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw ConfigError("bad integer for " + what + ": '" + s + "'");
    return v;
}

double parse_double(const std::string& s, const std::string& what) {
    try {
        size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("bad number for " + what + ": '" + s + "'");
    }
}

std::vector<int64_t> parse_int_list(const std::string& s, char sep, const std::string& what) {
    std::vector<int64_t> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, sep)) out.push_back(parse_int(trim(item), what));
    return out;
}

}  // namespace

NetworkConfig NetworkConfig::parse(const std::string& text) {
    NetworkConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::string section;
    LayerEntry* layer = nullptr;
    int line_no = 0;

    auto begin_section = [&](const std::string& name) {
        section = name;
        layer = nullptr;
        if (name == "options" || name == "input") return;
        LayerEntry entry;
        entry.index = int(cfg.layers.size());
        if (name == "conv") entry.kind = perf::LayerKind::Conv;
        else if (name == "maxpool") entry.kind = perf::LayerKind::Maxpool;
        else if (name == "upsample") entry.kind = perf::LayerKind::Upsample;
        else if (name == "route") entry.kind = perf::LayerKind::Route;
        else throw ConfigError("unknown section [" + name + "]");
        cfg.layers.push_back(entry);
        layer = &cfg.layers.back();
    };

    while (std::getline(in, line)) {
        line_no++;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("unterminated section at line " +
                                                      std::to_string(line_no));
            begin_section(trim(line.substr(1, line.size() - 2)));
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected key = value at line " + std::to_string(line_no));
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (section.empty())
            throw ConfigError("key '" + key + "' outside any section at line " +
                              std::to_string(line_no));

        if (section == "options") {
            auto& o = cfg.options;
            if (key == "acc_bits") o.acc_bits = int(parse_int(value, key));
            else if (key == "array_width") o.array_width = int(parse_int(value, key));
            else if (key == "cache_bytes") o.cache_bytes = uint64_t(parse_int(value, key));
            else if (key == "mem_bytes_per_cycle") o.mem_bytes_per_cycle = parse_double(value, key);
            else if (key == "overhead_percent") o.overhead_percent = parse_double(value, key);
            else if (key == "overhead_fixed") o.overhead_fixed = parse_int(value, key);
            else if (key == "frac_bits") o.frac_bits = int(parse_int(value, key));
            else if (key == "weight_format") {
                if (value == "int8") o.int8_weights = true;
                else if (value == "float") o.int8_weights = false;
                else throw ConfigError("weight_format must be float or int8");
            } else throw ConfigError("unknown option '" + key + "'");
        } else if (section == "input") {
            if (key == "dims") {
                auto d = parse_int_list(value, 'x', "input dims");
                if (d.size() != 3) throw ConfigError("input dims must be XxYxZ");
                cfg.options.input_dims = perf::Dims{int(d[0]), int(d[1]), int(d[2])};
            } else throw ConfigError("unknown input key '" + key + "'");
        } else {
            if (!layer) throw ConfigError("internal: no layer for section " + section);
            if (key == "name") {
                layer->name = value;
            } else if (key == "from") {
                auto list = parse_int_list(value, ',', "from");
                layer->from.assign(list.begin(), list.end());
            } else if (key == "kernel" && layer->kind == perf::LayerKind::Conv) {
                auto d = parse_int_list(value, 'x', "kernel");
                if (d.size() != 4 || d[0] != d[1]) throw ConfigError("kernel must be KxKxZxO");
                layer->k = int(d[0]);
                layer->kernel_z = int(d[2]);
                layer->out_channels = int(d[3]);
            } else if (key == "leaky" && layer->kind == perf::LayerKind::Conv) {
                auto slash = value.find('/');
                if (slash == std::string::npos) throw ConfigError("leaky must be num/den");
                int64_t num = parse_int(trim(value.substr(0, slash)), "leaky numerator");
                int64_t den = parse_int(trim(value.substr(slash + 1)), "leaky denominator");
                if (den <= 0 || (den & (den - 1)) != 0)
                    throw ConfigError("leaky denominator must be a power of two");
                layer->scale.leaky_num = int32_t(num);
                layer->scale.leaky_shift = int(std::countr_zero(uint64_t(den)));
            } else if (key == "out_mult" && layer->kind == perf::LayerKind::Conv) {
                layer->scale.out_mult = int32_t(parse_int(value, key));
            } else if (key == "out_shift" && layer->kind == perf::LayerKind::Conv) {
                layer->scale.out_shift = int(parse_int(value, key));
            } else if (key == "stride" && layer->kind == perf::LayerKind::Maxpool) {
                layer->pool_stride = int(parse_int(value, key));
                if (layer->pool_stride != 1 && layer->pool_stride != 2)
                    throw ConfigError("maxpool stride must be 1 or 2");
            } else if (key == "size" && layer->kind == perf::LayerKind::Maxpool) {
                if (parse_int(value, key) != 2) throw ConfigError("only 2x2 maxpool is supported");
            } else if (key == "factor" && layer->kind == perf::LayerKind::Upsample) {
                if (parse_int(value, key) != 2) throw ConfigError("only 2x upsample is supported");
            } else {
                throw ConfigError("unknown key '" + key + "' in [" + section + "]");
            }
        }
    }

    for (const auto& entry : cfg.layers) {
        if (entry.kind == perf::LayerKind::Conv && entry.k == 0)
            throw ConfigError("conv layer " + std::to_string(entry.index) + " missing kernel");
        if (entry.kind == perf::LayerKind::Route && entry.from.empty())
            throw ConfigError("route layer " + std::to_string(entry.index) + " missing from");
        if (entry.from.size() > 2) throw ConfigError("at most two route sources");
        if (entry.from.size() == 2 && entry.kind != perf::LayerKind::Route)
            throw ConfigError("only route layers take two sources");
        for (int src : entry.from)
            if (src < 0 || src >= entry.index)
                throw ConfigError("layer " + std::to_string(entry.index) +
                                  " references a non-earlier layer " + std::to_string(src));
        if (entry.kind == perf::LayerKind::Conv) entry.scale.validate();
    }
    if (cfg.layers.empty()) throw ConfigError("network has no layers");
    return cfg;
}

NetworkConfig NetworkConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

std::vector<perf::Dims> NetworkConfig::resolve_dims(const perf::Dims& input) const {
    if (input.x < 1 || input.y < 1 || input.z < 1) throw ConfigError("bad network input dims");
    if (options.input_dims) {
        const auto& d = *options.input_dims;
        if (d.x != input.x || d.y != input.y || d.z != input.z)
            throw ConfigError("input map is " + perf::Dims(input).str() +
                              " but the network declares " + d.str());
    }
    std::vector<perf::Dims> out;
    out.reserve(layers.size());
    for (const auto& entry : layers) {
        perf::Dims in_dims;
        if (entry.from.size() == 2) {
            auto a = out[size_t(entry.from[0])];
            auto b = out[size_t(entry.from[1])];
            if (a.x != b.x || a.y != b.y)
                throw ConfigError("route " + std::to_string(entry.index) +
                                  " concatenates maps of different extent");
            in_dims = {a.x, a.y, a.z + b.z};
        } else if (entry.from.size() == 1) {
            in_dims = out[size_t(entry.from[0])];
        } else {
            in_dims = entry.index == 0 ? input : out[size_t(entry.index) - 1];
        }

        perf::Dims result = in_dims;
        switch (entry.kind) {
            case perf::LayerKind::Conv:
                if (entry.kernel_z != in_dims.z)
                    throw ConfigError("conv layer " + std::to_string(entry.index) + " expects " +
                                      std::to_string(entry.kernel_z) + " channels, chain gives " +
                                      std::to_string(in_dims.z));
                result.z = entry.out_channels;
                break;
            case perf::LayerKind::Maxpool:
                if (entry.pool_stride == 2) {
                    result.x = in_dims.x / 2;
                    result.y = in_dims.y / 2;
                }
                break;
            case perf::LayerKind::Upsample:
                result.x = in_dims.x * 2;
                result.y = in_dims.y * 2;
                break;
            case perf::LayerKind::Route:
                break;  // pass-through or concat, already formed
        }
        out.push_back(result);
    }
    return out;
}

std::vector<perf::LayerSpec> NetworkConfig::layer_specs(const perf::Dims& input) const {
    auto dims = resolve_dims(input);
    std::vector<perf::LayerSpec> specs;
    specs.reserve(layers.size());
    for (const auto& entry : layers) {
        perf::LayerSpec spec;
        spec.index = entry.index;
        spec.kind = entry.kind;
        if (entry.from.size() == 2) {
            auto a = dims[size_t(entry.from[0])];
            auto b = dims[size_t(entry.from[1])];
            spec.input = {a.x, a.y, a.z + b.z};
        } else if (entry.from.size() == 1) {
            spec.input = dims[size_t(entry.from[0])];
        } else {
            spec.input = entry.index == 0 ? input : dims[size_t(entry.index) - 1];
        }
        spec.output = dims[size_t(entry.index)];
        spec.stored = spec.output;
        switch (entry.kind) {
            case perf::LayerKind::Conv:
                spec.k = entry.k;
                spec.z = entry.kernel_z;
                spec.o = entry.out_channels;
                spec.label = std::to_string(entry.k) + "x" + std::to_string(entry.k) + "x" +
                             std::to_string(entry.kernel_z) + "x" +
                             std::to_string(entry.out_channels);
                break;
            case perf::LayerKind::Maxpool:
                spec.label = "2x2/" + std::to_string(entry.pool_stride);
                break;
            case perf::LayerKind::Upsample:
                spec.label = "2x";
                break;
            case perf::LayerKind::Route:
                spec.label = "route";
                break;
        }
        specs.push_back(spec);
    }
    // a maxpool fed straight by the previous conv runs inside its scale
    // stage; the conv's stored map is then the pooled one
    for (size_t i = 1; i < specs.size(); i++) {
        const auto& entry = layers[i];
        if (entry.kind == perf::LayerKind::Maxpool && entry.from.empty() &&
            layers[i - 1].kind == perf::LayerKind::Conv) {
            specs[i - 1].fused_maxpool = true;
            specs[i - 1].stored = specs[i].output;
        }
    }
    return specs;
}

int NetworkConfig::conv_count() const {
    return int(std::count_if(layers.begin(), layers.end(), [](const LayerEntry& e) {
        return e.kind == perf::LayerKind::Conv;
    }));
}

}  // namespace blsim
