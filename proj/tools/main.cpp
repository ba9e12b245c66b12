#include <iostream>

#include "mtvrp/cli/cli.hpp"

int main(int argc, char** argv) { return mtvrp::cli::run(argc, argv, std::cout, std::cerr); }
