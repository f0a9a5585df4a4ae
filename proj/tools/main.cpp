#include <iostream>

#include "baldur/cli.hpp"

int main(int argc, char** argv) { return baldur::run_cli(argc, argv, std::cout, std::cerr); }
