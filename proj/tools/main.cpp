#include <iostream>

#include "cli.hpp"
#include "styleid/runtime.hpp"

int main(int argc, char** argv) {
  styleid::tune_allocator();
  return styleid::cli::run(argc, argv, std::cout, std::cerr);
}
