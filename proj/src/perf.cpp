// SPDX-License-Identifier: Apache-2.0
#include "blsim/perf.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace blsim::perf {

int64_t apply_overhead(int64_t base, const OverheadParams& p) {
    return base + llround(double(base) * p.percent / 100.0) + p.fixed;
}

LayerEstimate cycles_estimate_layer(const LayerSpec& spec, const std::vector<BitLayerPlan>& plans,
                                    const TileArrangement& arrange,
                                    const OverheadParams& overhead) {
    if (spec.kind != LayerKind::Conv) throw ConfigError("cycle estimate applies to conv layers");
    if (int(plans.size()) != spec.o) throw ConfigError("plans must cover all output indexes");
    int64_t trits = 0;
    for (const auto& plan : plans) trits += count_nonzero_trits(plan) + plan.n_b;

    LayerEstimate est;
    est.trits = trits;
    int64_t base_slice = (trits + arrange.groups - 1) / arrange.groups;
    est.cycles_slice = apply_overhead(base_slice, overhead);
    est.cycles_map = est.cycles_slice * spec.input.y;  // every slice is computed
    est.cycles_kernel = apply_overhead(trits, overhead);
    return est;
}

int multipass_factor(uint64_t compressed_bytes, uint64_t cache_bytes) {
    if (cache_bytes == 0) throw ConfigError("cache size must be positive");
    if (compressed_bytes == 0) return 1;
    return int((compressed_bytes + cache_bytes - 1) / cache_bytes);
}

BandwidthReport bandwidth_report(const std::vector<LayerSpec>& specs,
                                 const std::vector<uint64_t>& weight_bytes, uint64_t cache_bytes) {
    BandwidthReport report;
    size_t conv_ordinal = 0;
    for (const auto& spec : specs) {
        if (spec.kind != LayerKind::Conv) continue;
        if (conv_ordinal >= weight_bytes.size())
            throw ConfigError("missing weight byte count for a conv layer");
        BandwidthRow row;
        row.index = spec.index;
        row.label = spec.label;
        row.input = spec.input;
        row.output = spec.stored;
        row.weight_bytes = weight_bytes[conv_ordinal++];
        row.passes = multipass_factor(row.weight_bytes, cache_bytes);
        row.input_bytes = spec.input.product() * uint64_t(row.passes);
        row.output_bytes = spec.stored.product();
        report.rows.push_back(row);
        report.total_input += row.input_bytes;
        report.total_output += row.output_bytes;
        report.total_weights += row.weight_bytes;
    }
    if (conv_ordinal != weight_bytes.size())
        throw ConfigError("more weight byte counts than conv layers");
    return report;
}

double required_clock(int64_t cycles_per_frame, double fps) {
    if (cycles_per_frame <= 0 || fps <= 0) throw ConfigError("clock inputs must be positive");
    return double(cycles_per_frame) * fps;
}

double operations_per_clock(double total_ops, int64_t cycles_per_frame) {
    if (total_ops <= 0 || cycles_per_frame <= 0)
        throw ConfigError("operation counts must be positive");
    return total_ops / double(cycles_per_frame);
}

namespace {

const char* kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv: return "Conv";
        case LayerKind::Maxpool: return "Maxpool";
        case LayerKind::Upsample: return "Upsample";
        case LayerKind::Route: return "Route";
    }
    return "?";
}

std::string group_digits(int64_t v) {
    std::string s = std::to_string(v);
    std::string out;
    int count = 0;
    for (auto it = s.rbegin(); it != s.rend(); ++it) {
        if (count && count % 3 == 0 && *it != '-') out.push_back(',');
        out.push_back(*it);
        count++;
    }
    std::reverse(out.begin(), out.end());
    return out;
}

void emit_row(std::ostringstream& os, const std::vector<std::string>& cells,
              const std::vector<int>& widths, bool tab_separated) {
    for (size_t i = 0; i < cells.size(); i++) {
        if (tab_separated) {
            if (i) os << '\t';
            os << cells[i];
        } else {
            os << cells[i];
            if (i + 1 < cells.size())
                os << std::string(size_t(std::max(1, widths[i] - int(cells[i].size()) + 2)), ' ');
        }
    }
    os << '\n';
}

std::string render_table(const std::vector<std::vector<std::string>>& rows, bool tab_separated) {
    std::vector<int> widths;
    for (const auto& row : rows) {
        if (widths.size() < row.size()) widths.resize(row.size(), 0);
        for (size_t i = 0; i < row.size(); i++) widths[i] = std::max(widths[i], int(row[i].size()));
    }
    std::ostringstream os;
    for (const auto& row : rows) emit_row(os, row, widths, tab_separated);
    return os.str();
}

}  // namespace

std::string render_cycles_table(const std::vector<CycleRow>& rows, int64_t cycles_frame,
                                bool tab_separated) {
    std::vector<std::vector<std::string>> cells;
    cells.push_back({"#", "Layer", "Kernel", "Input", "Output", "MACs/Kernel", "Cycles/Slice",
                     "Cycles/Map", "Cycles/Kernel"});
    for (const auto& row : rows) {
        std::vector<std::string> c;
        c.push_back(std::to_string(row.index));
        c.push_back(kind_name(row.kind));
        c.push_back(row.label);
        c.push_back(row.input.str());
        c.push_back(row.output.str());
        if (row.kind == LayerKind::Conv) {
            c.push_back(group_digits(row.macs_kernel));
            if (row.cycles) {
                c.push_back(group_digits(row.cycles->cycles_slice));
                c.push_back(group_digits(row.cycles->cycles_map));
                c.push_back(group_digits(row.cycles->cycles_kernel));
            }
        }
        cells.push_back(std::move(c));
    }
    cells.push_back({"", "Cycles per frame", "", "", "", "", "", group_digits(cycles_frame), ""});
    return render_table(cells, tab_separated);
}

std::string render_bandwidth_table(const BandwidthReport& report, bool tab_separated) {
    std::vector<std::vector<std::string>> cells;
    cells.push_back({"#", "Layer", "Input", "Input Map", "Output", "Output Map",
                     "Compressed Weights", "Passes"});
    for (const auto& row : report.rows) {
        cells.push_back({std::to_string(row.index), "Conv", row.input.str(),
                         group_digits(int64_t(row.input_bytes)), row.output.str(),
                         group_digits(int64_t(row.output_bytes)),
                         group_digits(int64_t(row.weight_bytes)), std::to_string(row.passes)});
    }
    cells.push_back({"", "Total", "", group_digits(int64_t(report.total_input)), "",
                     group_digits(int64_t(report.total_output)),
                     group_digits(int64_t(report.total_weights)), ""});
    return render_table(cells, tab_separated);
}

}  // namespace blsim::perf
