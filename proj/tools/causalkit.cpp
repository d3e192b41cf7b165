#include <iostream>

#include "causalkit/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return causalkit::cli::run(args, std::cout, std::cerr);
}
