// Copyright 2026 The Thema Authors.
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

#include <cstddef>
#include <string>

namespace thema {

/// One phase-2 code. `index` is corpus-global once the codebook is
/// aggregated; before that it is the position within its transcript.
struct InitialCode {
  std::size_t index = 0;
  std::string name;
  std::string description;
  std::string quote;
  std::string transcript_id;
  std::string run_id;

  bool operator==(const InitialCode&) const = default;
};

}  // namespace thema
