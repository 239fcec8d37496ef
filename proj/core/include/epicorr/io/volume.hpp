// Copyright 2026 The epicorr Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// EPIV1 volume container.
//
// Byte layout:
//
//   offset 0   "EPIV1\n"                          6 bytes of magic
//   offset 6   header: one line of JSON, '\n'-terminated
//                {"dims":[n_slices,n_fe,n_pe],"kind":"image"|"field"|"mask",
//                 "pe_axis":"columns","units":"...","provenance":{"k":"v",...}}
//   then       n_slices * n_fe * n_pe little-endian IEEE-754 float32 values,
//              slice-major, then row-major within a slice (PE fastest)
//
// Field containers must use units "pixels".

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "epicorr/image.hpp"

namespace epicorr::io {

enum class VolumeKind { Image, Field, Mask };

std::string_view to_string(VolumeKind kind);
VolumeKind parse_volume_kind(std::string_view text);

inline constexpr std::string_view kVolumeMagic = "EPIV1";

struct VolumeContainer {
  std::array<std::int64_t, 3> dims{0, 0, 0};  // n_slices, n_fe, n_pe
  VolumeKind kind = VolumeKind::Image;
  std::string pe_axis = "columns";
  std::string units = "a.u.";
  std::map<std::string, std::string> provenance;
  std::vector<float> payload;

  std::int64_t slice_count() const { return dims[0]; }
  std::int64_t voxel_count() const { return dims[0] * dims[1] * dims[2]; }
  /// Checks payload length and kind/units consistency.
  void validate() const;

  friend bool operator==(const VolumeContainer&, const VolumeContainer&) = default;
};

void write_volume(const VolumeContainer& volume, const std::filesystem::path& path);
VolumeContainer read_volume(const std::filesystem::path& path);

/// In-memory variants of the above.
std::string encode_volume(const VolumeContainer& volume);
VolumeContainer decode_volume(std::string_view bytes);

/// Slice `s` as doubles.
Matrix slice_matrix(const VolumeContainer& volume, std::int64_t s);

/// Packs equally-shaped slices into a container.
VolumeContainer make_volume(const std::vector<Matrix>& slices, VolumeKind kind,
                            std::string units = "");
VolumeContainer make_mask_volume(const std::vector<Mask>& masks);
Mask slice_mask(const VolumeContainer& volume, std::int64_t s);

}  // namespace epicorr::io
