#include <iostream>
#include <string>
#include <vector>

#include "muoneq/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return muoneq::dispatch(args, std::cout, std::cerr);
}
