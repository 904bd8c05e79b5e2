#include <iostream>

#include "snnd/cli.hpp"

int main(int argc, char** argv) {
  return snnd::run_cli(argc, argv, std::cout, std::cerr);
}
