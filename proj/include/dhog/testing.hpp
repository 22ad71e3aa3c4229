// Copyright 2026 The dhog Authors
//
// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include "dhog/tape.hpp"

namespace dhog::testing {

/// Identity in the forward pass whose backward pass scales the adjoint by
/// `factor`. Exists only to give gradient checks a negative control.
Var corrupt_adjoint(Var a, double factor);

}  // namespace dhog::testing
