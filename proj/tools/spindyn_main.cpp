#include "spindyn/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return spindyn::cli::run(argc, argv, std::cout, std::cerr); }
