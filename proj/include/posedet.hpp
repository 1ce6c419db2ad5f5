/* Copyright 2026 The posedet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include "posedet/appearance.hpp"
#include "posedet/config.hpp"
#include "posedet/detection.hpp"
#include "posedet/error.hpp"
#include "posedet/evaluation.hpp"
#include "posedet/geometry.hpp"
#include "posedet/io.hpp"
#include "posedet/parallel.hpp"
#include "posedet/pipeline.hpp"
#include "posedet/priors.hpp"
#include "posedet/random.hpp"
#include "posedet/synth.hpp"
