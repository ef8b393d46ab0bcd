// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "deepkd/cli.hpp"

int main(int argc, char** argv) {
  return deepkd::run_cli(argc, argv, std::cout, std::cerr);
}
