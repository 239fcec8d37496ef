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

#include "epicorr/io/volume.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"

namespace epicorr::io {
namespace {

using nlohmann::json;

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  }
  return v;
}

std::string default_units(VolumeKind kind) {
  switch (kind) {
    case VolumeKind::Field: return "pixels";
    case VolumeKind::Mask: return "boolean";
    case VolumeKind::Image: return "a.u.";
  }
  return "a.u.";
}

}  // namespace

std::string_view to_string(VolumeKind kind) {
  switch (kind) {
    case VolumeKind::Image: return "image";
    case VolumeKind::Field: return "field";
    case VolumeKind::Mask: return "mask";
  }
  return "image";
}

VolumeKind parse_volume_kind(std::string_view text) {
  if (text == "image") return VolumeKind::Image;
  if (text == "field") return VolumeKind::Field;
  if (text == "mask") return VolumeKind::Mask;
  throw FormatError("unknown volume kind '" + std::string(text) + "'");
}

void VolumeContainer::validate() const {
  for (auto d : dims) {
    if (d < 0) throw FormatError("volume: negative dimension");
  }
  if (static_cast<std::int64_t>(payload.size()) != voxel_count()) {
    throw FormatError("volume: payload has " + std::to_string(payload.size()) + " values, dims need " +
                      std::to_string(voxel_count()));
  }
  if (kind == VolumeKind::Field && units != "pixels") {
    throw FormatError("volume: field containers must use units \"pixels\", got \"" + units + "\"");
  }
}

std::string encode_volume(const VolumeContainer& volume) {
  volume.validate();
  json header;
  header["dims"] = volume.dims;
  header["kind"] = std::string(to_string(volume.kind));
  header["pe_axis"] = volume.pe_axis;
  header["units"] = volume.units;
  header["provenance"] = volume.provenance;

  std::string out;
  out.append(kVolumeMagic);
  out.push_back('\n');
  out.append(header.dump());
  out.push_back('\n');
  const std::size_t start = out.size();
  out.resize(start + volume.payload.size() * 4);
  for (std::size_t k = 0; k < volume.payload.size(); ++k) {
    const std::uint32_t bits = to_little_endian(std::bit_cast<std::uint32_t>(volume.payload[k]));
    std::memcpy(out.data() + start + 4 * k, &bits, 4);
  }
  return out;
}

VolumeContainer decode_volume(std::string_view bytes) {
  const std::size_t magic_len = kVolumeMagic.size() + 1;
  if (bytes.size() < magic_len || bytes.substr(0, kVolumeMagic.size()) != kVolumeMagic ||
      bytes[kVolumeMagic.size()] != '\n') {
    throw FormatError("volume: bad magic at byte offset 0 (expected \"EPIV1\\n\")");
  }
  const std::size_t eol = bytes.find('\n', magic_len);
  if (eol == std::string_view::npos) {
    throw FormatError("volume: unterminated header starting at byte offset " + std::to_string(magic_len));
  }

  VolumeContainer v;
  try {
    const json header = json::parse(bytes.substr(magic_len, eol - magic_len));
    v.dims = header.at("dims").get<std::array<std::int64_t, 3>>();
    v.kind = parse_volume_kind(header.at("kind").get<std::string>());
    v.pe_axis = header.at("pe_axis").get<std::string>();
    v.units = header.at("units").get<std::string>();
    if (header.contains("provenance")) {
      v.provenance = header.at("provenance").get<std::map<std::string, std::string>>();
    }
  } catch (const json::exception& e) {
    throw FormatError("volume: malformed header at byte offset " + std::to_string(magic_len) + ": " +
                      e.what());
  }
  for (auto d : v.dims) {
    if (d < 0) throw FormatError("volume: negative dimension in header");
  }

  const std::size_t start = eol + 1;
  const auto expected = static_cast<std::size_t>(v.voxel_count()) * 4;
  const std::size_t actual = bytes.size() - start;
  if (actual != expected) {
    throw FormatError("volume: payload at byte offset " + std::to_string(start) + " has " +
                      std::to_string(actual) + " bytes, expected " + std::to_string(expected));
  }
  v.payload.resize(static_cast<std::size_t>(v.voxel_count()));
  for (std::size_t k = 0; k < v.payload.size(); ++k) {
    std::uint32_t bits = 0;
    std::memcpy(&bits, bytes.data() + start + 4 * k, 4);
    v.payload[k] = std::bit_cast<float>(to_little_endian(bits));
  }
  v.validate();
  return v;
}

void write_volume(const VolumeContainer& volume, const std::filesystem::path& path) {
  const std::string bytes = encode_volume(volume);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing " + path.string());
}

VolumeContainer read_volume(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_volume(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Matrix slice_matrix(const VolumeContainer& volume, std::int64_t s) {
  if (s < 0 || s >= volume.slice_count()) throw InvalidInput("slice index out of range");
  const auto rows = static_cast<Index>(volume.dims[1]);
  const auto cols = static_cast<Index>(volume.dims[2]);
  Matrix m(rows, cols);
  const float* src = volume.payload.data() + s * rows * cols;
  for (Index k = 0; k < rows * cols; ++k) m.data()[k] = static_cast<double>(src[k]);
  return m;
}

VolumeContainer make_volume(const std::vector<Matrix>& slices, VolumeKind kind, std::string units) {
  VolumeContainer v;
  v.kind = kind;
  v.units = units.empty() ? default_units(kind) : std::move(units);
  if (slices.empty()) return v;
  const Index rows = slices.front().rows();
  const Index cols = slices.front().cols();
  v.dims = {static_cast<std::int64_t>(slices.size()), rows, cols};
  v.payload.reserve(slices.size() * static_cast<std::size_t>(rows * cols));
  for (const auto& m : slices) {
    require_same_shape(m, slices.front(), "make_volume");
    for (Index k = 0; k < m.size(); ++k) v.payload.push_back(static_cast<float>(m.data()[k]));
  }
  return v;
}

VolumeContainer make_mask_volume(const std::vector<Mask>& masks) {
  std::vector<Matrix> slices;
  for (const auto& m : masks) {
    Matrix s(m.rows(), m.cols());
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) s(i, j) = m(i, j) ? 1.0 : 0.0;
    }
    slices.push_back(std::move(s));
  }
  return make_volume(slices, VolumeKind::Mask);
}

Mask slice_mask(const VolumeContainer& volume, std::int64_t s) {
  const Matrix m = slice_matrix(volume, s);
  Mask out(m.rows(), m.cols(), false);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) out.set(i, j, m(i, j) != 0.0);
  }
  return out;
}

}  // namespace epicorr::io
