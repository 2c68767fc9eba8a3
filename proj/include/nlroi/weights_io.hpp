// Copyright 2026 The nlroi Authors
// SPDX-License-Identifier: Apache-2.0

// Weights file layout (all integers little-endian):
//
//   "NLROIW01"                          8 bytes
//   u32 tensor count
//   per tensor:
//     u16 name length, UTF-8 name
//     u8 rank, rank x u32 dims
//     prod(dims) x f64 (IEEE-754 bits), row-major

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "nlroi/nlroi.hpp"

namespace nlroi {

inline constexpr std::string_view kWeightsMagic = "NLROIW01";

// Bad magic or duplicate names: FormatError. Short or over-long payload: CorruptionError.
std::string encode_weights(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_weights(std::string_view bytes);

void save_weights(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_weights(const std::string& path);

}  // namespace nlroi
