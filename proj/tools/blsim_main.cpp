// SPDX-License-Identifier: Apache-2.0
//
// blsim: bit-exact model of a MAC-less, bit-layer CNN inference processor
// with compressed sparse weight streams.
//
//   blsim compress --config net.cfg --weights w.bin --out streams/
//   blsim run      --config net.cfg --input in.fmap --streams streams/ --out out/
//   blsim verify   --config net.cfg --seed 1
//   blsim report   --config net.cfg --streams streams/ --fps 30

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "blsim/io.hpp"
#include "blsim/perf.hpp"
#include "blsim/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace blsim;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitMismatch = 1;
constexpr int kExitIo = 2;
constexpr int kExitConfig = 3;

perf::Dims require_input_dims(const NetworkConfig& cfg) {
    if (!cfg.options.input_dims)
        throw ConfigError("the network does not declare [input] dims");
    return *cfg.options.input_dims;
}

std::vector<ConvArtifacts> load_artifacts(const NetworkConfig& cfg, const std::string& dir) {
    std::vector<ConvArtifacts> artifacts;
    for (const auto& entry : cfg.layers) {
        if (entry.kind != perf::LayerKind::Conv) continue;
        ConvArtifacts art;
        art.layer_index = entry.index;
        auto stream_path = (fs::path(dir) / stream_filename(entry.index)).string();
        if (!fs::exists(stream_path))
            throw IoError("layer " + std::to_string(entry.index) + ": missing stream file " +
                          stream_path);
        art.stream = CompressedWeightStream::load(stream_path);
        art.biases =
            load_biases((fs::path(dir) / bias_filename(entry.index)).string(), art.stream.o);
        artifacts.push_back(std::move(art));
    }
    return artifacts;
}

json dims_json(const perf::Dims& d) {
    return json{{"x", d.x}, {"y", d.y}, {"z", d.z}};
}

int cmd_compress(const std::string& config_path, const std::string& weights_path,
                 const std::string& out_dir) {
    auto cfg = NetworkConfig::load(config_path);
    auto blob = io::read_file(weights_path);
    auto tensors = load_weight_blob(cfg, blob);
    std::vector<CompressSummary> summaries;
    auto artifacts = compress_network(cfg, tensors, &summaries);

    fs::create_directories(out_dir);
    for (const auto& art : artifacts) {
        art.stream.save((fs::path(out_dir) / stream_filename(art.layer_index)).string());
        save_biases((fs::path(out_dir) / bias_filename(art.layer_index)).string(), art.biases);
    }

    uint64_t raw_total = 0, stream_total = 0;
    std::cout << "layer  raw_bytes  stream_bytes  ratio    N_3      N_b\n";
    for (const auto& s : summaries) {
        raw_total += s.raw_bytes;
        stream_total += s.stream_bytes;
        std::printf("%5d  %9llu  %12llu  %5.2f  %8lld  %3d\n", s.layer_index,
                    (unsigned long long)s.raw_bytes, (unsigned long long)s.stream_bytes,
                    s.raw_bytes ? double(s.stream_bytes) / double(s.raw_bytes) : 0.0,
                    (long long)s.total_trits, s.n_b);
    }
    std::printf("total  %9llu  %12llu  %5.2f\n", (unsigned long long)raw_total,
                (unsigned long long)stream_total,
                raw_total ? double(stream_total) / double(raw_total) : 0.0);
    return kExitOk;
}

int cmd_run(const std::string& config_path, const std::string& input_path,
            const std::string& streams_dir, const std::string& out_dir,
            const std::vector<int>& dump_layers) {
    auto cfg = NetworkConfig::load(config_path);
    auto input = FeatureMap::load(input_path);
    auto artifacts = load_artifacts(cfg, streams_dir);
    auto run = run_network(cfg, input, artifacts);

    fs::create_directories(out_dir);
    run.outputs.back().save((fs::path(out_dir) / "output.fmap").string());
    for (int idx : dump_layers) {
        if (idx < 0 || idx >= int(run.outputs.size()))
            throw ConfigError("--dump-layer " + std::to_string(idx) + " is out of range");
        char name[32];
        std::snprintf(name, sizeof name, "layer%03d.fmap", idx);
        run.outputs[size_t(idx)].save((fs::path(out_dir) / name).string());
    }

    auto dims = cfg.resolve_dims({input.dims_x(), input.dims_y(), input.dims_z()});
    json report;
    report["cycles_frame"] = run.cycles_frame;
    report["layers"] = json::array();
    for (const auto& s : run.stats) {
        json row;
        row["index"] = s.layer_index;
        row["output"] = dims_json(dims[size_t(s.layer_index)]);
        row["macs_per_kernel"] = s.macs_kernel;
        row["cycles_per_slice"] = s.cycles_slice;
        row["cycles_map"] = s.cycles_map;
        row["cycles_kernel"] = s.cycles_kernel;
        row["decode_steps"] = s.decode_steps;
        row["peak_buffer_pixels"] = s.peak_buffer_pixels;
        row["buffer_capacity"] = s.buffer_capacity;
        row["stream_bytes"] = s.stream_bytes;
        row["passes"] = perf::multipass_factor(s.stream_bytes, cfg.options.cache_bytes);
        report["layers"].push_back(row);
    }
    auto report_text = report.dump(2) + "\n";
    io::write_file_atomic((fs::path(out_dir) / "report.json").string(), report_text.data(),
                          report_text.size());
    std::cout << "frame cycles: " << run.cycles_frame << "\n";
    std::cout << "outputs in " << out_dir << "\n";
    return kExitOk;
}

int cmd_verify(const std::string& config_path, uint64_t seed, const std::string& input_path,
               const std::string& weights_path) {
    auto cfg = NetworkConfig::load(config_path);
    FeatureMap input = input_path.empty() ? random_map(require_input_dims(cfg), seed)
                                          : FeatureMap::load(input_path);
    std::vector<QuantizedWeightTensor> tensors =
        weights_path.empty() ? random_tensors(cfg, seed + 1)
                             : load_weight_blob(cfg, io::read_file(weights_path));
    auto result = verify_network(cfg, input, tensors);
    if (!result.ok) {
        std::cout << "MISMATCH: " << result.message << "\n";
        return kExitMismatch;
    }
    std::cout << "verified: reference, mac and bit-layer paths agree on every pixel\n";
    return kExitOk;
}

struct Calibration {
    std::map<int, int64_t> cycles_per_slice;
    std::optional<int64_t> cycles_per_frame;
    std::map<int, std::map<std::string, uint64_t>> reported_bytes;
};

Calibration load_calibration(const std::string& path) {
    Calibration cal;
    auto buf = io::read_file(path);
    auto j = json::parse(buf.begin(), buf.end());
    if (j.contains("cycles_per_slice"))
        for (auto& [key, value] : j["cycles_per_slice"].items())
            cal.cycles_per_slice[std::stoi(key)] = value.get<int64_t>();
    if (j.contains("cycles_per_frame")) cal.cycles_per_frame = j["cycles_per_frame"].get<int64_t>();
    if (j.contains("reported_bytes"))
        for (auto& [key, value] : j["reported_bytes"].items())
            for (auto& [field, bytes] : value.items())
                cal.reported_bytes[std::stoi(key)][field] = bytes.get<uint64_t>();
    return cal;
}

int cmd_report(const std::string& config_path, const std::string& streams_dir, double fps,
               const std::string& calibration_path, const std::string& out_path) {
    if (fps <= 0) throw ConfigError("--fps must be positive");
    auto cfg = NetworkConfig::load(config_path);
    auto input_dims = require_input_dims(cfg);
    auto specs = cfg.layer_specs(input_dims);
    auto artifacts = load_artifacts(cfg, streams_dir);
    Calibration cal;
    if (!calibration_path.empty()) cal = load_calibration(calibration_path);

    perf::OverheadParams overhead{cfg.options.overhead_percent, cfg.options.overhead_fixed};
    std::vector<perf::CycleRow> cycle_rows;
    std::vector<uint64_t> weight_bytes;
    int64_t cycles_frame = 0;
    double total_ops = 0;
    size_t ai = 0;
    for (const auto& spec : specs) {
        if (spec.kind != perf::LayerKind::Conv && spec.kind != perf::LayerKind::Maxpool) continue;
        perf::CycleRow row;
        row.index = spec.index;
        row.kind = spec.kind;
        row.label = spec.label;
        row.input = spec.input;
        row.output = spec.output;
        if (spec.kind == perf::LayerKind::Conv) {
            const auto& art = artifacts[ai++];
            weight_bytes.push_back(art.stream.serialize().size());
            row.macs_kernel = macs_per_kernel(spec.k, spec.z, spec.o);
            total_ops +=
                2.0 * double(row.macs_kernel) * double(spec.output.x) * double(spec.output.y);
            std::vector<BitLayerPlan> plans;
            plans.reserve(size_t(art.stream.o));
            for (int o = 0; o < art.stream.o; o++) plans.push_back(ac_decode(art.stream, o).plan);
            auto arrange = arrange_tiles(spec.input.x, cfg.options.array_width);
            auto est = perf::cycles_estimate_layer(spec, plans, arrange, overhead);
            if (auto it = cal.cycles_per_slice.find(spec.index);
                it != cal.cycles_per_slice.end()) {
                est.cycles_slice = it->second;
                est.cycles_map = it->second * spec.input.y;
            }
            cycles_frame += est.cycles_map;
            row.cycles = est;
        }
        cycle_rows.push_back(row);
    }
    if (cal.cycles_per_frame) cycles_frame = *cal.cycles_per_frame;

    auto bw = perf::bandwidth_report(specs, weight_bytes, cfg.options.cache_bytes);

    std::ostringstream out;
    out << perf::render_cycles_table(cycle_rows, cycles_frame, false) << "\n";
    out << perf::render_bandwidth_table(bw, false) << "\n";
    double clock = perf::required_clock(cycles_frame, fps);
    out << "required clock for " << fps << " fps: " << std::fixed << std::setprecision(1)
        << clock / 1e6 << " MHz\n";
    out << "operations per clock: " << std::setprecision(1)
        << perf::operations_per_clock(total_ops, cycles_frame) << "\n";

    if (!cal.reported_bytes.empty()) {
        out << "\nreference-figure deltas (computed vs reported):\n";
        for (const auto& row : bw.rows) {
            auto it = cal.reported_bytes.find(row.index);
            if (it == cal.reported_bytes.end()) continue;
            auto emit = [&](const char* field, uint64_t computed) {
                auto f = it->second.find(field);
                if (f == it->second.end() || f->second == computed) return;
                out << "  layer " << row.index << " " << field << ": computed " << computed
                    << ", reported " << f->second << " (delta "
                    << int64_t(computed) - int64_t(f->second) << ")\n";
            };
            // reported input figures are per pass; compare like with like
            emit("input", row.input_bytes / uint64_t(row.passes));
            emit("output", row.output_bytes);
            emit("weights", row.weight_bytes);
        }
    }

    auto text = out.str();
    if (out_path.empty()) {
        std::cout << text;
    } else {
        io::write_file_atomic(out_path, text.data(), text.size());
        // the machine-readable twin sits next to the human-readable one
        auto tsv = perf::render_cycles_table(cycle_rows, cycles_frame, true) + "\n" +
                   perf::render_bandwidth_table(bw, true);
        io::write_file_atomic(out_path + ".tsv", tsv.data(), tsv.size());
        std::cout << "report written to " << out_path << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bit-layer CNN inference processor model"};
    app.require_subcommand(1);

    std::string config_path, weights_path, input_path, streams_dir, out_dir, calibration_path,
        out_path;
    std::vector<int> dump_layers;
    uint64_t seed = 1;
    double fps = 30.0;

    auto* compress = app.add_subcommand("compress", "encode weights into compressed streams");
    compress->add_option("--config", config_path)->required();
    compress->add_option("--weights", weights_path)->required();
    compress->add_option("--out", out_dir)->required();

    auto* run = app.add_subcommand("run", "run inference over a feature-map file");
    run->add_option("--config", config_path)->required();
    run->add_option("--input", input_path)->required();
    run->add_option("--streams", streams_dir)->required();
    run->add_option("--out", out_dir)->required();
    run->add_option("--dump-layer", dump_layers);

    auto* verify = app.add_subcommand("verify", "check the three compute paths agree");
    verify->add_option("--config", config_path)->required();
    verify->add_option("--seed", seed);
    verify->add_option("--input", input_path);
    verify->add_option("--weights", weights_path);

    auto* report = app.add_subcommand("report", "emit cycle and bandwidth tables");
    report->add_option("--config", config_path)->required();
    report->add_option("--streams", streams_dir)->required();
    report->add_option("--fps", fps);
    report->add_option("--calibration", calibration_path);
    report->add_option("--out", out_path);

    CLI11_PARSE(app, argc, argv);

    try {
        if (compress->parsed()) return cmd_compress(config_path, weights_path, out_dir);
        if (run->parsed())
            return cmd_run(config_path, input_path, streams_dir, out_dir, dump_layers);
        if (verify->parsed()) return cmd_verify(config_path, seed, input_path, weights_path);
        if (report->parsed())
            return cmd_report(config_path, streams_dir, fps, calibration_path, out_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const StreamError& e) {
        std::cerr << "stream error: " << e.what() << "\n";
        return kExitIo;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitOk;
}
