#include <iostream>

#include "phmm/cli/commands.hpp"

int main(int argc, char** argv) { return phmm::cli::run(argc, argv, std::cout, std::cerr); }
