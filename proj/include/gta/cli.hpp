// Copyright 2026 The gta-attention Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gta {

// Exit codes: 0 success, 2 configuration error, 3 numeric failure,
// 4 I/O error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitIo = 4;

// Full CLI entry point (subcommands gen-data, train, eval, gradcheck, flops,
// dump-attn). Catches library errors and maps them onto the exit codes.
int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);

}  // namespace gta
