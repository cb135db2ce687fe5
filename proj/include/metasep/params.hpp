// metasep/params.hpp

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

#ifndef METASEP_PARAMS_HPP_
#define METASEP_PARAMS_HPP_

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "metasep/errors.hpp"

namespace metasep {

struct ParamBlock {
  std::string name;
  size_t offset = 0;
  size_t size = 0;
  std::vector<int> shape;

  bool operator==(const ParamBlock &o) const {
    return name == o.name && offset == o.offset && size == o.size &&
           shape == o.shape;
  }
};

// Schema mapping named parameter blocks into one flat value sequence.
// Blocks are contiguous, non-overlapping, and cover the full length.
struct ParamLayout {
  std::vector<ParamBlock> blocks;
  size_t total = 0;

  bool operator==(const ParamLayout &o) const {
    return total == o.total && blocks == o.blocks;
  }

  const ParamBlock &find(const std::string &name) const {
    for (const auto &b : blocks)
      if (b.name == name) return b;
    throw KeyMissing("ParamLayout: no block named '" + name + "'");
  }

  void validate() const {
    size_t expect = 0;
    for (const auto &b : blocks) {
      if (b.offset != expect)
        throw ConfigError("ParamLayout: block '" + b.name +
                          "' is not contiguous");
      size_t shape_size = 1;
      for (int d : b.shape) shape_size *= static_cast<size_t>(d);
      if (shape_size != b.size)
        throw ConfigError("ParamLayout: block '" + b.name +
                          "' shape/size mismatch");
      expect += b.size;
    }
    if (expect != total)
      throw ConfigError("ParamLayout: blocks do not cover the full length");
  }

  // Name of the block containing flat index i.
  const std::string &block_of(size_t i) const {
    for (const auto &b : blocks)
      if (i >= b.offset && i < b.offset + b.size) return b.name;
    throw KeyMissing("ParamLayout: index out of range");
  }
};

// The flat, ordered parameter state of the separation model.
struct ParamVector {
  std::vector<double> values;
  ParamLayout layout;

  size_t size() const { return values.size(); }
};

// Returns the name of the first block holding a non-finite value, if any.
inline std::optional<std::string> first_non_finite_block(
    const std::vector<double> &values, const ParamLayout &layout) {
  for (size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) return layout.block_of(i);
  }
  return std::nullopt;
}

inline void check_finite_or_throw(const std::vector<double> &values,
                                  const ParamLayout &layout,
                                  const char *what) {
  if (auto block = first_non_finite_block(values, layout)) {
    throw NumericalError(std::string(what) + ": non-finite value in block '" +
                         *block + "'");
  }
}

}  // namespace metasep

#endif  // METASEP_PARAMS_HPP_
