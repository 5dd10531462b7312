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

#include "meetdiar/grad/checkpoint.h"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "meetdiar/errors.h"

namespace meetdiar::grad {
namespace {

constexpr char kMagic[8] = {'M', 'D', 'T', 'A', 'R', 'C', 'H', '\0'};

template <typename T>
void PutLe(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes, bytes + sizeof(T));
  }
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T Get() {
    Need(sizeof(T));
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
      std::reverse(raw, raw + sizeof(T));
    }
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }

  std::string GetBytes(std::size_t n) {
    Need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool AtEnd() const { return pos_ == bytes_.size(); }

 private:
  void Need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw ParseError("tensor archive truncated at byte " +
                       std::to_string(pos_));
    }
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void TensorArchive::Put(const std::string& name, Shape shape,
                        std::vector<double> values) {
  if (NumElements(shape) != values.size()) {
    throw ShapeError("archive entry '" + name + "' shape/value mismatch");
  }
  for (auto& [n, arr] : entries) {
    if (n == name) {
      arr = {std::move(shape), std::move(values)};
      return;
    }
  }
  entries.emplace_back(name, ArchivedArray{std::move(shape), std::move(values)});
}

bool TensorArchive::Has(const std::string& name) const {
  for (const auto& [n, arr] : entries) {
    if (n == name) return true;
  }
  return false;
}

const ArchivedArray& TensorArchive::Get(const std::string& name) const {
  for (const auto& [n, arr] : entries) {
    if (n == name) return arr;
  }
  throw ParseError("archive has no entry '" + name + "'");
}

std::string TensorArchive::Serialize() const {
  std::string out(kMagic, sizeof(kMagic));
  PutLe<std::uint32_t>(out, kArchiveVersion);
  const std::string meta = metadata.dump();
  PutLe<std::uint64_t>(out, meta.size());
  out += meta;
  PutLe<std::uint64_t>(out, entries.size());
  for (const auto& [name, arr] : entries) {
    PutLe<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    PutLe<std::uint32_t>(out, static_cast<std::uint32_t>(arr.shape.size()));
    for (std::size_t d : arr.shape) PutLe<std::uint64_t>(out, d);
    for (double v : arr.values) PutLe<double>(out, v);
  }
  return out;
}

TensorArchive TensorArchive::Deserialize(const std::string& bytes) {
  Reader in(bytes);
  if (in.GetBytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw ParseError("not a tensor archive (bad magic)");
  }
  const auto version = in.Get<std::uint32_t>();
  if (version != kArchiveVersion) {
    throw ParseError("unsupported tensor archive version " +
                     std::to_string(version));
  }
  TensorArchive archive;
  const auto meta_len = in.Get<std::uint64_t>();
  try {
    archive.metadata = nlohmann::json::parse(in.GetBytes(meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("tensor archive metadata: ") + e.what());
  }
  const auto count = in.Get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = in.GetBytes(in.Get<std::uint32_t>());
    const auto rank = in.Get<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = in.Get<std::uint64_t>();
    std::vector<double> values(NumElements(shape));
    for (double& v : values) v = in.Get<double>();
    archive.entries.emplace_back(std::move(name),
                                 ArchivedArray{std::move(shape), std::move(values)});
  }
  if (!in.AtEnd()) throw ParseError("trailing bytes after tensor archive");
  return archive;
}

void TensorArchive::Save(const std::string& path) const {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp + "' for writing");
    const std::string bytes = Serialize();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

TensorArchive TensorArchive::Load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return Deserialize(ss.str());
}

void StoreParameters(TensorArchive& archive, const ParameterSet& params,
                     const AdamState* adam) {
  std::size_t i = 0;
  for (const auto& [name, t] : params.entries()) {
    archive.Put("param/" + name, t.shape(),
                std::vector<double>(t.values().begin(), t.values().end()));
    if (adam) {
      archive.Put("adam.m/" + name, t.shape(), adam->m.at(i));
      archive.Put("adam.v/" + name, t.shape(), adam->v.at(i));
    }
    ++i;
  }
  if (adam) {
    archive.metadata["adam"] = {
        {"step", adam->step},
        {"learning_rate", adam->options.learning_rate},
        {"beta1", adam->options.beta1},
        {"beta2", adam->options.beta2},
        {"epsilon", adam->options.epsilon},
    };
  }
}

void RestoreParameters(const TensorArchive& archive, ParameterSet& params,
                       AdamState* adam) {
  if (adam) {
    if (!archive.metadata.contains("adam")) {
      throw ParseError("checkpoint carries no optimizer state");
    }
    const auto& a = archive.metadata["adam"];
    adam->step = a.at("step").get<std::int64_t>();
    adam->options.learning_rate = a.at("learning_rate").get<double>();
    adam->options.beta1 = a.at("beta1").get<double>();
    adam->options.beta2 = a.at("beta2").get<double>();
    adam->options.epsilon = a.at("epsilon").get<double>();
    adam->m.assign(params.size(), {});
    adam->v.assign(params.size(), {});
  }
  std::size_t i = 0;
  for (const auto& [name, t] : params.entries()) {
    const ArchivedArray& arr = archive.Get("param/" + name);
    if (arr.shape != t.shape()) {
      throw ShapeError("checkpoint parameter '" + name + "' has shape " +
                       ShapeString(arr.shape) + ", model expects " +
                       ShapeString(t.shape()));
    }
    Tensor handle = t;
    std::copy(arr.values.begin(), arr.values.end(),
              handle.mutable_values().begin());
    if (adam) {
      adam->m[i] = archive.Get("adam.m/" + name).values;
      adam->v[i] = archive.Get("adam.v/" + name).values;
    }
    ++i;
  }
}

}  // namespace meetdiar::grad
