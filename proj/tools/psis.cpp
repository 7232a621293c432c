#include <iostream>

#include "psis/cli.hpp"

int main(int argc, char** argv) { return psis::run_cli(argc, argv, std::cout, std::cerr); }
