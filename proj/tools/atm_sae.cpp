// Copyright (c) 2026, The ATM-SAE Authors
// SPDX-License-Identifier: Apache-2.0

#include "atm/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return atm::run_cli(argc, argv, std::cout, std::cerr); }
