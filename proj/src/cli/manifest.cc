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

#include "meetdiar/cli/manifest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "meetdiar/errors.h"
#include "meetdiar/version.h"

namespace meetdiar::cli {

nlohmann::json RunManifest::ToJson() const {
  return {{"schema", "meetdiar.manifest/1"},
          {"command", command},
          {"argv", argv},
          {"config", config},
          {"seed", seed},
          {"tool_version", kVersion},
          {"inputs", inputs},
          {"outputs", outputs},
          {"wall_seconds", wall_seconds}};
}

RunManifest RunManifest::FromJson(const nlohmann::json& j) {
  try {
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.argv = j.value("argv", std::vector<std::string>{});
    m.config = j.value("config", nlohmann::json::object());
    m.seed = j.value("seed", std::uint64_t{0});
    m.inputs = j.value("inputs", std::vector<std::string>{});
    m.outputs = j.value("outputs", std::vector<std::string>{});
    m.wall_seconds = j.value("wall_seconds", 0.0);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }
}

void WriteFileAtomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out << contents;
    if (!out) throw IoError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void WriteManifest(const std::string& dir, const RunManifest& manifest) {
  std::filesystem::create_directories(dir);
  WriteFileAtomic((std::filesystem::path(dir) / kManifestName).string(),
                  manifest.ToJson().dump(2) + "\n");
}

RunManifest ReadManifest(const std::string& path) {
  try {
    return RunManifest::FromJson(nlohmann::json::parse(ReadFile(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

}  // namespace meetdiar::cli
