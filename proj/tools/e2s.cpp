#include <iostream>

#include "e2s/cli.hpp"

int main(int argc, char** argv) {
  return e2s::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
