#include <iostream>

#include "fakescope/cli.hpp"

int main(int argc, char** argv) { return fakescope::run_cli(argc, argv, std::cout, std::cerr); }
