#include <iostream>

#include "deepshield/cli/commands.hpp"

int main(int argc, char** argv) {
  return deepshield::cli::run_cli(argc, argv, std::cout, std::cerr);
}
