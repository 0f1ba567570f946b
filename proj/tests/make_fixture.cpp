// SPDX-License-Identifier: Apache-2.0
//
// Writes the deterministic weight blob and input map the CLI round-trip
// test feeds to the tool.
//   make_fixture <dir>                     generate weights.bin + input.fmap
//   make_fixture corrupt <file> <off_end>  flip one byte, counted from the end

#include <cstring>
#include <random>
#include <string>
#include <vector>

#include "blsim/io.hpp"
#include "blsim/tensor.hpp"

int main(int argc, char** argv) {
    if (argc == 4 && std::string(argv[1]) == "corrupt") {
        auto buf = blsim::io::read_file(argv[2]);
        size_t off_end = std::stoul(argv[3]);
        if (off_end >= buf.size()) return 1;
        buf[buf.size() - 1 - off_end] ^= 0x5A;
        blsim::io::write_file_atomic(argv[2], buf);
        return 0;
    }
    if (argc != 2) return 1;
    std::string dir = argv[1];

    // float blob for conv 3x3x3x8 then conv 1x1x8x4, weights then biases
    std::mt19937_64 rng(424242);
    std::uniform_real_distribution<float> wdist(-1.0f, 1.0f);
    std::uniform_real_distribution<double> draw(0.0, 1.0);
    std::vector<float> values;
    auto push_layer = [&](int k, int z, int o) {
        for (int i = 0; i < k * k * z * o; i++)
            values.push_back(draw(rng) < 0.6 ? 0.0f : wdist(rng));
        for (int i = 0; i < o; i++) values.push_back(wdist(rng));
    };
    push_layer(3, 3, 8);
    push_layer(1, 8, 4);
    std::vector<uint8_t> blob(values.size() * 4);
    std::memcpy(blob.data(), values.data(), blob.size());
    blsim::io::write_file_atomic(dir + "/weights.bin", blob);

    blsim::FeatureMap input(16, 12, 3);
    std::uniform_int_distribution<int> px(-128, 127);
    for (auto& p : input.data()) p = int8_t(px(rng));
    input.save(dir + "/input.fmap");

    // identity network material: unit 1x1 kernel, non-negative pixels, so
    // the output file must be byte-identical to the input file
    std::vector<float> ident;
    for (int o = 0; o < 3; o++)
        for (int z = 0; z < 3; z++) ident.push_back(z == o ? 1.0f : 0.0f);
    for (int o = 0; o < 3; o++) ident.push_back(0.0f);
    std::vector<uint8_t> ident_blob(ident.size() * 4);
    std::memcpy(ident_blob.data(), ident.data(), ident_blob.size());
    blsim::io::write_file_atomic(dir + "/identity_weights.bin", ident_blob);

    blsim::FeatureMap pos(9, 7, 3);
    std::uniform_int_distribution<int> ppx(0, 127);
    for (auto& p : pos.data()) p = int8_t(ppx(rng));
    pos.save(dir + "/input_pos.fmap");
    return 0;
}
