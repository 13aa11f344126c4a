// Copyright (c) the permubench authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace permubench {

// All library failures derive from Error so callers (the CLI, the matrix
// runner) can catch one type and still report the category.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define PERMUBENCH_DEFINE_ERROR(Name)     \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

PERMUBENCH_DEFINE_ERROR(DimensionError);     // shape mismatch in a tensor op
PERMUBENCH_DEFINE_ERROR(IndexError);         // label/index out of range
PERMUBENCH_DEFINE_ERROR(UsageError);         // API misuse (e.g. detached backward)
PERMUBENCH_DEFINE_ERROR(SpecError);          // invalid model/corruption/attack spec
PERMUBENCH_DEFINE_ERROR(FormatError);        // malformed file or archive
PERMUBENCH_DEFINE_ERROR(DataError);          // dataset content unusable
PERMUBENCH_DEFINE_ERROR(NumericError);       // non-finite value where forbidden
PERMUBENCH_DEFINE_ERROR(TrainingError);      // divergence during training
PERMUBENCH_DEFINE_ERROR(MetricError);        // metric undefined for input
PERMUBENCH_DEFINE_ERROR(CompletenessError);  // missing records/cells
PERMUBENCH_DEFINE_ERROR(ConfigError);        // bad run configuration

#undef PERMUBENCH_DEFINE_ERROR

}  // namespace permubench
