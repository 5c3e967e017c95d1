#include <iostream>

#include "jigsaw/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return jigsaw::run_cli(args, std::cout, std::cerr);
}
