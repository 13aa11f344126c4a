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

// The classification objective shared by training and the attacks.

#include <span>

#include "permubench/tensor.hpp"

namespace permubench {

using LossFn = Tensor (*)(const Tensor& logits, std::span<const int> labels);

// Mean softmax cross-entropy over the batch, for binary and multiclass tasks
// alike.
Tensor classification_loss(const Tensor& logits, std::span<const int> labels);

}  // namespace permubench
