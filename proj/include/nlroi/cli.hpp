// Copyright 2026 The nlroi Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <span>
#include <string>

namespace nlroi {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// `args` excludes the program name. Data goes to `out`, diagnostics to `err`.
// Returns 0 on success, 1 on a failed check or runtime error, 2 on a usage error.
int cli_main(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace nlroi
