// SPDX-License-Identifier: Apache-2.0
#include "aspectprobe/cli.hpp"

int main(int argc, char** argv) { return aspectprobe::cli::run(argc, argv); }
