#include <iostream>

#include "ssvi/cli.hpp"

int main(int argc, char** argv) { return ssvi::run_cli(argc, argv, std::cout, std::cerr); }
