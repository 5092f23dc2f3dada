#include "dozer/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return dozer::cli::run(argc, argv, std::cin, std::cout, std::cerr); }
