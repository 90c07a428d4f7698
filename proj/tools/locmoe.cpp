// Copyright (c) 2026 The locmoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "locmoe/cli.hpp"

int main(int argc, char** argv) { return locmoe::cli::run(argc, argv, std::cout, std::cerr); }
