#include "csbg/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return csbg::cli::run(argc, argv, std::cout, std::cerr); }
