// Copyright 2026 The meetdiar Authors.
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

// Binary tensor container used for checkpoints and probability dumps.
//
// Layout (all integers little-endian):
//   8 bytes  magic "MDTARCH\0"
//   u32      format version (currently 1)
//   u64      metadata length, followed by that many bytes of UTF-8 JSON
//   u64      entry count
//   per entry:
//     u32 name length, name bytes
//     u32 rank, rank x u64 dimensions
//     product(dimensions) x f64 values (IEEE-754, little-endian)

#ifndef MEETDIAR_GRAD_CHECKPOINT_H_
#define MEETDIAR_GRAD_CHECKPOINT_H_

#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "meetdiar/grad/params.h"
#include "meetdiar/grad/tensor.h"

namespace meetdiar::grad {

inline constexpr std::uint32_t kArchiveVersion = 1;

struct ArchivedArray {
  Shape shape;
  std::vector<double> values;
};

struct TensorArchive {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<std::pair<std::string, ArchivedArray>> entries;

  void Put(const std::string& name, Shape shape, std::vector<double> values);
  bool Has(const std::string& name) const;
  const ArchivedArray& Get(const std::string& name) const;

  std::string Serialize() const;
  static TensorArchive Deserialize(const std::string& bytes);

  // Writes via a temporary file and rename.
  void Save(const std::string& path) const;
  static TensorArchive Load(const std::string& path);
};

// Stores parameters under "param/<name>" and, when given, the Adam moments
// under "adam.m/<name>" and "adam.v/<name>" plus Adam scalars in metadata.
void StoreParameters(TensorArchive& archive, const ParameterSet& params,
                     const AdamState* adam = nullptr);
// Copies archived values into an existing, identically-shaped set.
void RestoreParameters(const TensorArchive& archive, ParameterSet& params,
                       AdamState* adam = nullptr);

}  // namespace meetdiar::grad

#endif  // MEETDIAR_GRAD_CHECKPOINT_H_
