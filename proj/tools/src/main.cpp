#include <iostream>

#include "cvnn_cli/commands.hpp"

int main(int argc, char** argv) { return cvnn::cli::run_cli(argc, argv, std::cout, std::cerr); }
