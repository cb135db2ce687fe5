// metasep/errors.hpp

// Copyright 2026  The metasep authors

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

#ifndef METASEP_ERRORS_HPP_
#define METASEP_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace metasep {

// Base class for every error this library raises on purpose.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string &msg) : std::runtime_error(msg) {}
};

// A caller violated an argument precondition (lengths, rates, ranges, ...).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// A source or noise waveform has zero power and cannot be SNR-scaled.
class DegenerateSource : public Error {
 public:
  using Error::Error;
};

// The reference signal is identically constant; Si-SNR is undefined.
class DegenerateReference : public Error {
 public:
  using Error::Error;
};

// A constant input where variation is required (e.g. Pearson on a flat list).
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

// The request is outside the supported envelope (e.g. uPIT with C > 6).
class Unsupported : public Error {
 public:
  using Error::Error;
};

// A configuration is inconsistent with itself or with other inputs.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A non-finite value appeared in a numeric computation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// A corpus or speaker does not have enough material to build a task.
class InsufficientData : public Error {
 public:
  using Error::Error;
};

// Task construction produced no eligible tasks at all.
class EmptyTaskSet : public Error {
 public:
  using Error::Error;
};

// Filesystem-level failure; the message names the path.
class IoError : public Error {
 public:
  using Error::Error;
};

// A file parsed but its contents are malformed or mismatch expectations.
class FormatError : public Error {
 public:
  using Error::Error;
};

// A lookup key (domain label, block name, ...) is missing.
class KeyMissing : public Error {
 public:
  using Error::Error;
};

}  // namespace metasep

#endif  // METASEP_ERRORS_HPP_
