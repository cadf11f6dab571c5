#include <iostream>
#include <string>
#include <vector>

#include "sevit/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return sevit::run_cli(args, std::cout, std::cerr);
}
