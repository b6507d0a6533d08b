#include <iostream>

#include "mdqa/cli.hpp"

int main(int argc, char** argv) { return mdqa::run_cli(argc, argv, std::cout, std::cerr); }
