#include <iostream>

#include "red/cli.hpp"

int main(int argc, char** argv) { return red::cli::run(argc, argv, std::cout, std::cerr); }
