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

#include "epicorr/io/nifti.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace epicorr::io {
namespace {

constexpr std::size_t kHeaderSize = 348;
constexpr std::int16_t kDtInt16 = 4;
constexpr std::int16_t kDtFloat32 = 16;

// Header field offsets (NIfTI-1).
constexpr std::size_t kOffDim = 40;
constexpr std::size_t kOffDatatype = 70;
constexpr std::size_t kOffBitpix = 72;
constexpr std::size_t kOffPixdim = 76;
constexpr std::size_t kOffVoxOffset = 108;
constexpr std::size_t kOffSclSlope = 112;
constexpr std::size_t kOffSclInter = 116;
constexpr std::size_t kOffQformCode = 252;
constexpr std::size_t kOffSformCode = 254;
constexpr std::size_t kOffSrowX = 280;
constexpr std::size_t kOffMagic = 344;

class Reader {
 public:
  Reader(std::string_view bytes, bool swap) : bytes_(bytes), swap_(swap) {}

  template <class T>
  T get(std::size_t offset) const {
    static_assert(sizeof(T) == 2 || sizeof(T) == 4);
    if (offset + sizeof(T) > bytes_.size()) {
      throw FormatError("nifti: read past end of file at byte offset " + std::to_string(offset));
    }
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, bytes_.data() + offset, sizeof(T));
    if (swap_) std::reverse(std::begin(raw), std::end(raw));
    T v;
    std::memcpy(&v, raw, sizeof(T));
    return v;
  }

 private:
  std::string_view bytes_;
  bool swap_;
};

std::string format_float(float v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

}  // namespace

VolumeContainer decode_nifti_basic(std::string_view bytes, NiftiPeAxis pe_axis) {
  if (bytes.size() < kHeaderSize) {
    throw FormatError("nifti: file has " + std::to_string(bytes.size()) +
                      " bytes, shorter than the 348-byte header");
  }
  std::int32_t sizeof_hdr = 0;
  std::memcpy(&sizeof_hdr, bytes.data(), 4);
  bool swap = false;
  if (sizeof_hdr != 348) {
    const auto u = static_cast<std::uint32_t>(sizeof_hdr);
    swap = ((u >> 24) | ((u >> 8) & 0xFF00u) | ((u << 8) & 0xFF0000u) | (u << 24)) == 348u;
    if (!swap) throw FormatError("nifti: sizeof_hdr at byte offset 0 is not 348");
  }
  const Reader rd(bytes, swap);

  if (bytes.substr(kOffMagic, 4) == std::string_view("ni1\0", 4)) {
    throw UnsupportedFeature("nifti: two-file (.hdr/.img) NIfTI is not supported");
  }
  if (bytes.substr(kOffMagic, 4) != std::string_view("n+1\0", 4)) {
    throw FormatError("nifti: bad magic at byte offset 344 (expected \"n+1\")");
  }

  std::int16_t dim[8];
  for (int k = 0; k < 8; ++k) dim[k] = rd.get<std::int16_t>(kOffDim + 2 * k);
  if (dim[0] < 3 || dim[0] > 7) {
    throw UnsupportedFeature("nifti: only 3D volumes are supported (dim[0] = " +
                             std::to_string(dim[0]) + ")");
  }
  for (int k = 4; k <= dim[0]; ++k) {
    if (dim[k] > 1) {
      throw UnsupportedFeature("nifti: only 3D volumes are supported (dim[" + std::to_string(k) +
                               "] = " + std::to_string(dim[k]) + ")");
    }
  }
  const std::int64_t ni = dim[1];
  const std::int64_t nj = dim[2];
  const std::int64_t nk = dim[3];
  if (ni < 1 || nj < 1 || nk < 1) throw FormatError("nifti: non-positive dimension");

  const auto datatype = rd.get<std::int16_t>(kOffDatatype);
  const auto bitpix = rd.get<std::int16_t>(kOffBitpix);
  std::size_t bytes_per_voxel = 0;
  if (datatype == kDtFloat32) {
    bytes_per_voxel = 4;
  } else if (datatype == kDtInt16) {
    bytes_per_voxel = 2;
  } else {
    throw UnsupportedFeature("nifti: datatype " + std::to_string(datatype) +
                             " is not supported (need FLOAT32 or INT16)");
  }
  if (static_cast<std::size_t>(bitpix) != 8 * bytes_per_voxel) {
    throw FormatError("nifti: bitpix " + std::to_string(bitpix) + " does not match datatype");
  }

  const float vox_offset_f = rd.get<float>(kOffVoxOffset);
  if (!(vox_offset_f >= static_cast<float>(kHeaderSize))) {
    throw FormatError("nifti: vox_offset at byte offset 108 must be >= 348 for .nii files");
  }
  const auto vox_offset = static_cast<std::size_t>(vox_offset_f);
  const std::size_t count = static_cast<std::size_t>(ni * nj * nk);
  const std::size_t need = vox_offset + count * bytes_per_voxel;
  if (bytes.size() < need) {
    throw FormatError("nifti: voxel data at byte offset " + std::to_string(vox_offset) + " needs " +
                      std::to_string(count * bytes_per_voxel) + " bytes, file has " +
                      std::to_string(bytes.size() - std::min(bytes.size(), vox_offset)));
  }

  float slope = rd.get<float>(kOffSclSlope);
  float inter = rd.get<float>(kOffSclInter);
  if (slope == 0.0f || !std::isfinite(slope)) {
    slope = 1.0f;
    inter = 0.0f;
  }
  if (!std::isfinite(inter)) inter = 0.0f;

  const bool pe_along_i = pe_axis == NiftiPeAxis::I;
  VolumeContainer v;
  v.kind = VolumeKind::Image;
  v.units = "a.u.";
  v.pe_axis = "columns";
  v.dims = {nk, pe_along_i ? nj : ni, pe_along_i ? ni : nj};
  v.payload.resize(count);
  for (std::int64_t k = 0; k < nk; ++k) {
    for (std::int64_t j = 0; j < nj; ++j) {
      for (std::int64_t i = 0; i < ni; ++i) {
        const std::size_t src = static_cast<std::size_t>((k * nj + j) * ni + i);
        const std::size_t off = vox_offset + src * bytes_per_voxel;
        const double raw = datatype == kDtFloat32 ? static_cast<double>(rd.get<float>(off))
                                                  : static_cast<double>(rd.get<std::int16_t>(off));
        const std::size_t dst = pe_along_i ? src : static_cast<std::size_t>((k * ni + i) * nj + j);
        v.payload[dst] = static_cast<float>(raw * slope + inter);
      }
    }
  }

  v.provenance["source"] = "nifti1";
  v.provenance["nifti.pe_axis"] = pe_along_i ? "i" : "j";
  v.provenance["nifti.datatype"] = std::to_string(datatype);
  v.provenance["nifti.scl_slope"] = format_float(slope);
  v.provenance["nifti.scl_inter"] = format_float(inter);
  v.provenance["nifti.qform_code"] = std::to_string(rd.get<std::int16_t>(kOffQformCode));
  v.provenance["nifti.sform_code"] = std::to_string(rd.get<std::int16_t>(kOffSformCode));
  std::string pixdim;
  for (int k = 1; k <= 3; ++k) pixdim += (k > 1 ? " " : "") + format_float(rd.get<float>(kOffPixdim + 4 * k));
  v.provenance["nifti.pixdim"] = pixdim;
  std::string affine;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      if (r || c) affine += ' ';
      affine += format_float(rd.get<float>(kOffSrowX + 16 * r + 4 * c));
    }
  }
  v.provenance["nifti.srow"] = affine;
  v.validate();
  return v;
}

VolumeContainer read_nifti_basic(const std::filesystem::path& path, NiftiPeAxis pe_axis) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  VolumeContainer v = decode_nifti_basic(bytes, pe_axis);
  v.provenance["nifti.path"] = path.string();
  return v;
}

}  // namespace epicorr::io
