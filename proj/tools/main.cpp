#include <iostream>

#include "rigcn/cli.hpp"

int main(int argc, char** argv) { return rigcn::run_cli(argc, argv, std::cout, std::cerr); }
