#include "mdsf/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return mdsf::run_cli(argc, argv, std::cout, std::cerr); }
