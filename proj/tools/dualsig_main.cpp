// Copyright 2026 The dualsig Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "dualsig/cli.hpp"

int main(int argc, char** argv) { return dualsig::dispatch(argc, argv, std::cout, std::cerr); }
