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

#include <stdexcept>
#include <string>

namespace epicorr {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad shapes, non-finite values, out-of-range parameters.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Singular systems, exploding losses, non-finite gradients.
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

/// Malformed files: bad magic, truncated payloads, inconsistent headers.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Valid input that uses a feature this toolkit does not read.
class UnsupportedFeature : public Error {
 public:
  using Error::Error;
};

}  // namespace epicorr
