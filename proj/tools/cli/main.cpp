#include <iostream>

#include "subtomo_cli/app.hpp"

int main(int argc, char** argv) { return subtomo::cli::run_cli(argc, argv, std::cout, std::cerr); }
