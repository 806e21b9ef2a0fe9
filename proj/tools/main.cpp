#include "sparseiv/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return sparseiv::cli::run_cli(argc, argv, std::cout, std::cerr); }
