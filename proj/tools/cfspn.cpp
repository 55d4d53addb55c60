#include "cfspn/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
  return cfspn::cli::run_cli(argc, argv, std::cout, std::cerr);
}
