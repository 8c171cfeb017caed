#include "scrcl/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return scrcl::run_cli(argc, argv, std::cout, std::cerr); }
