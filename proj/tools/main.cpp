#include <iostream>

#include "iotflow/cli.hpp"

int main(int argc, char** argv) { return iotflow::cli::run(argc, argv, std::cout, std::cerr); }
