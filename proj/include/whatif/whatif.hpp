/* Copyright 2026 The Whatif Authors. All Rights Reserved.

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

// Everything except the HTTP service and the command line, which pull in
// cpp-httplib and CLI11 (include whatif/service.hpp or whatif/cli.hpp).

#include "whatif/core.hpp"
#include "whatif/trace.hpp"
#include "whatif/graph.hpp"
#include "whatif/builder.hpp"
#include "whatif/layers.hpp"
#include "whatif/simulator.hpp"
#include "whatif/transform.hpp"
#include "whatif/comm.hpp"
#include "whatif/scenarios.hpp"
#include "whatif/breakdown.hpp"
#include "whatif/evaluate.hpp"
#include "whatif/export.hpp"
#include "whatif/synthetic.hpp"
