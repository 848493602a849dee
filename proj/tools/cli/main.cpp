#include "commands.hpp"

#include <iostream>

int main(int argc, char** argv) {
  return stabkit::cli::run({argv + 1, argv + argc}, std::cout, std::cerr);
}
