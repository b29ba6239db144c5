#include <iostream>
#include <string>
#include <vector>

#include "transnet_cli/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return transnet::cli::run(std::move(args), std::cout, std::cerr);
}
