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

#include <doctest.h>

#include "meetdiar/cli/selfcheck.h"
#include "meetdiar/errors.h"

using namespace meetdiar;
using namespace meetdiar::cli;

TEST_CASE("every check passes on a clean build") {
  const std::vector<CheckResult> results = RunSelfChecks({});
  CHECK(results.size() == SelfCheckNames().size());
  for (const CheckResult& r : results) {
    CAPTURE(r.name);
    CAPTURE(r.detail);
    CHECK(r.passed);
  }
}

TEST_CASE("an injected fault fails exactly the named check") {
  for (const std::string& name : SelfCheckNames()) {
    CAPTURE(name);
    SelfCheckOptions opts;
    opts.inject_fault = name;
    for (const CheckResult& r : RunSelfChecks(opts)) {
      CAPTURE(r.name);
      CHECK(r.passed == (r.name != name));
    }
  }
}

TEST_CASE("unknown fault names are rejected") {
  SelfCheckOptions opts;
  opts.inject_fault = "nonsense";
  CHECK_THROWS_AS(RunSelfChecks(opts), UsageError);
}

TEST_CASE("checks are reproducible across seeds") {
  for (std::uint64_t seed : {1u, 77u}) {
    SelfCheckOptions opts;
    opts.seed = seed;
    for (const CheckResult& r : RunSelfChecks(opts)) {
      CAPTURE(r.name);
      CHECK(r.passed);
    }
  }
}
