#include <iostream>

#include "dnsgd/cli.hpp"

int main(int argc, char** argv) { return dnsgd::run_cli(argc, argv, std::cout, std::cerr); }
