#include <iostream>

#include "netagent/cli.hpp"

int main(int argc, char** argv) { return netagent::cli::run_cli(argc, argv, std::cout, std::cerr); }
