// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "rgu/cli.hpp"

int main(int argc, char** argv) { return rgu::app::run_cli(argc, argv, std::cout, std::cerr); }
