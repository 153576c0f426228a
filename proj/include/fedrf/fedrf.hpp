// Copyright 2026 The fedrf Authors. All Rights Reserved.
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

#include "fedrf/adam.hpp"
#include "fedrf/adapters.hpp"
#include "fedrf/binary_io.hpp"
#include "fedrf/experiment.hpp"
#include "fedrf/federation.hpp"
#include "fedrf/grad_check.hpp"
#include "fedrf/ops.hpp"
#include "fedrf/peft.hpp"
#include "fedrf/rng.hpp"
#include "fedrf/signal.hpp"
#include "fedrf/tensor.hpp"
#include "fedrf/training.hpp"
#include "fedrf/wavenet.hpp"
