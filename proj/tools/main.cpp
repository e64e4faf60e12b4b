#include <iostream>

#include "csmc/cli.hpp"

int main(int argc, char** argv) {
  return csmc::run_cli(argc, argv, std::cout, std::cerr);
}
