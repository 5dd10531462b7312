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

#ifndef MEETDIAR_CLI_SELFCHECK_H_
#define MEETDIAR_CLI_SELFCHECK_H_

#include <cstdint>
#include <string>
#include <vector>

namespace meetdiar::cli {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct SelfCheckOptions {
  // Name of a check whose computation is deliberately corrupted.
  std::string inject_fault;
  std::uint64_t seed = 2024;
};

// Names accepted by --inject-fault.
std::vector<std::string> SelfCheckNames();

// Fast invariant suite: gradient checks, PIT against brute force, attention
// oracles, simulator constraints, DER mapping, RTTM round trip, Adam.
std::vector<CheckResult> RunSelfChecks(const SelfCheckOptions& options);

}  // namespace meetdiar::cli

#endif  // MEETDIAR_CLI_SELFCHECK_H_
