// Copyright 2026 The rotavg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Umbrella header for the library (the CLI lives in rotavg/cli.hpp).

#ifndef ROTAVG_ROTAVG_HPP
#define ROTAVG_ROTAVG_HPP

#include "rotavg/error.hpp"
#include "rotavg/global_solver.hpp"
#include "rotavg/local_refine.hpp"
#include "rotavg/pipeline.hpp"
#include "rotavg/ra_ba.hpp"
#include "rotavg/so3.hpp"
#include "rotavg/vgf.hpp"
#include "rotavg/view_graph.hpp"

#endif  // ROTAVG_ROTAVG_HPP
