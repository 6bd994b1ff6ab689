#include <iostream>

#include "atomic_sm/cli.hpp"

int main(int argc, char** argv) { return atomic_sm::cli::run(argc, argv, std::cout, std::cerr); }
