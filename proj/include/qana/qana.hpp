// Copyright 2026 The QANA Authors
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

#include "qana/arch.hpp"
#include "qana/config.hpp"
#include "qana/convert.hpp"
#include "qana/data.hpp"
#include "qana/dataset.hpp"
#include "qana/error.hpp"
#include "qana/fold.hpp"
#include "qana/image_io.hpp"
#include "qana/log.hpp"
#include "qana/metrics.hpp"
#include "qana/model_io.hpp"
#include "qana/ops.hpp"
#include "qana/params.hpp"
#include "qana/pipeline.hpp"
#include "qana/quant.hpp"
#include "qana/runtime.hpp"
#include "qana/snn.hpp"
#include "qana/synth.hpp"
#include "qana/tensor.hpp"
#include "qana/train.hpp"
