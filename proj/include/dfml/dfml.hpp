/*
 * Copyright 2026 The dfml Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "dfml/checkpoint.hpp"
#include "dfml/config.hpp"
#include "dfml/conv.hpp"
#include "dfml/data.hpp"
#include "dfml/embed.hpp"
#include "dfml/eval.hpp"
#include "dfml/image.hpp"
#include "dfml/io.hpp"
#include "dfml/labels.hpp"
#include "dfml/linalg.hpp"
#include "dfml/models.hpp"
#include "dfml/nn.hpp"
#include "dfml/pool.hpp"
#include "dfml/report.hpp"
#include "dfml/rng.hpp"
#include "dfml/tensor.hpp"
#include "dfml/training.hpp"
