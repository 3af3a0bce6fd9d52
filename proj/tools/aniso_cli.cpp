#include "aniso/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return aniso::cli::run_cli(argc, argv, std::cout, std::cerr); }
