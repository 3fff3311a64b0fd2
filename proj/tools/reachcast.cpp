// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "reachcast/cli.hpp"

int main(int argc, char** argv) {
  std::ios::sync_with_stdio(false);
  return reachcast::dispatch(argc, argv, std::cin, std::cout, std::cerr);
}
