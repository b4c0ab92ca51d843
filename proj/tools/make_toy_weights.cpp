// SPDX-License-Identifier: Apache-2.0
//
// Regenerates data/toy/toy_mlm.json from its fixed seed.

#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "aspectprobe/toy_mlm.hpp"

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: make_toy_weights OUT.json\n";
        return 1;
    }
    constexpr std::uint64_t kSeed = 20240501;
    const auto w = aspectprobe::generate_toy_weights(kSeed, aspectprobe::default_toy_vocabulary(),
                                                     /*hidden_size=*/16, /*n_layers=*/4, /*n_heads=*/2,
                                                     /*ffn_size=*/32, /*max_len=*/32);
    std::ofstream out(argv[1]);
    out << aspectprobe::toy_weights_to_json(w).dump() << '\n';
    return out ? 0 : 1;
}
