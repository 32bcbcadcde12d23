#include <iostream>
#include <string>
#include <vector>

#include "dnncal/cli.hpp"

int main(int argc, char** argv) {
  return dnncal::run_command(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
