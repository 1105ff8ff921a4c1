#include <iostream>

#include "commands.hpp"

int main(int argc, char** argv) { return mixshap::cli::run(argc, argv, std::cout, std::cerr); }
