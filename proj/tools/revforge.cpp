#include <iostream>

#include "revforge/cli.hpp"

int main(int argc, char** argv) { return revforge::cli::run(argc, argv, std::cout, std::cerr); }
