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

// Run configuration in a sectioned key = value text format:
//
//   # comment
//   [optimizer]
//   pyramid_factors = 4, 2, 1
//   iterations = 200
//   [loss]
//   lambda = 1e-05
//   [multires]
//   mode = multiblur
//   [phantom]
//   slices = 1
//
// Unknown sections or keys are rejected. Lists are comma separated; an empty
// value means an empty list. serialize_config writes every key.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "epicorr/optimizer.hpp"
#include "epicorr/phantom.hpp"

namespace epicorr::io {

struct RunConfig {
  OptimizerConfig optimizer;
  PhantomSpec phantom;  // phantom.rigid.rotation is unused; see rotation_deg
  double rotation_deg = 0.0;  // simulated in-plane rotation, degrees
  int slices = 1;             // simulate: slice s uses seed + s

  /// The phantom spec of slice `s`, with the rotation converted to radians.
  PhantomSpec phantom_spec(int s = 0) const;
  void validate() const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Missing keys keep their defaults. Throws FormatError with the line number.
RunConfig parse_config(std::string_view text);
RunConfig read_config(const std::filesystem::path& path);
std::string serialize_config(const RunConfig& config);

/// FNV-1a 64 of serialize_config, as 16 hex digits.
std::string config_hash(const RunConfig& config);

}  // namespace epicorr::io
