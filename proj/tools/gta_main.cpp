// Copyright 2026 The gta-attention Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "gta/cli.hpp"

int main(int argc, char** argv) {
  return gta::run_cli(argc, argv, std::cout, std::cerr);
}
