#include <iostream>

#include "fsl/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return fsl::run_cli(args, std::cout, std::cerr);
}
