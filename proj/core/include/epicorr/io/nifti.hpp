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

#pragma once

#include <filesystem>
#include <string_view>

#include "epicorr/io/volume.hpp"

namespace epicorr::io {

/// Which NIfTI voxel axis is the phase-encode direction.
enum class NiftiPeAxis { I, J };

/// Reads a single-file (.nii) NIfTI-1 volume with datatype FLOAT32 (16) or
/// INT16 (4) and exactly three dimensions, in either byte order.
///
/// Slices run along k. With PE along i (the default), slice rows follow j
/// and columns follow i, which is the on-disk order. With PE along j the
/// slice is transposed. scl_slope / scl_inter are applied when slope != 0.
/// The sform (or qform code and pixdim) is recorded in the provenance map.
VolumeContainer read_nifti_basic(const std::filesystem::path& path, NiftiPeAxis pe_axis = NiftiPeAxis::I);
VolumeContainer decode_nifti_basic(std::string_view bytes, NiftiPeAxis pe_axis = NiftiPeAxis::I);

}  // namespace epicorr::io
