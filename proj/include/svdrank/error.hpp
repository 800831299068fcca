// Copyright 2026 The svdrank Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace svdrank {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text (manifest, label file, split file).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Input parsed but violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Request cannot be satisfied with the given configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Binary file (feature, spectrogram, checkpoint, WAVE) is malformed.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Numerical failure during optimization.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace svdrank
