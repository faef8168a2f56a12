#include <iostream>

#include "dnr/cli.hpp"

int main(int argc, char** argv) {
  return dnr::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
