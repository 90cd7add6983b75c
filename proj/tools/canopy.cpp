#include <iostream>
#include <string>
#include <vector>

#include "canopy/app/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return canopy::app::run_cli(args, std::cout, std::cerr);
}
