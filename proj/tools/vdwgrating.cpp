#include <iostream>

#include "vdwg/cli.hpp"

int main(int argc, char** argv) { return vdwg::run_cli(argc, argv, std::cout, std::cerr); }
