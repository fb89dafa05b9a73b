// av2vec/errors.hpp

// Copyright 2026  AV2vec Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef AV2VEC_ERRORS_HPP_
#define AV2VEC_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace av2vec {

// Invalid configuration values or cross-module inconsistencies.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor dimension / length mismatches.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Out-of-range indices or labels.
class RangeError : public std::runtime_error {
 public:
  explicit RangeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Inputs on which the requested operation is mathematically undefined
// (e.g. mixing noise into an all-zero signal at finite SNR).
class DegenerateInputError : public std::runtime_error {
 public:
  explicit DegenerateInputError(const std::string& msg)
      : std::runtime_error(msg) {}
};

// Truncated or malformed binary files.
class CorruptFileError : public std::runtime_error {
 public:
  explicit CorruptFileError(const std::string& msg)
      : std::runtime_error(msg) {}
};

// Non-finite losses and other unrecoverable training-loop failures.
class TrainingError : public std::runtime_error {
 public:
  explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace av2vec

#endif  // AV2VEC_ERRORS_HPP_
