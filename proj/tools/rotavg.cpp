// Copyright 2026 The rotavg Authors
// SPDX-License-Identifier: Apache-2.0

#include "rotavg/cli.hpp"

int main(int argc, char** argv) { return rotavg::cli::dispatch(argc, argv); }
