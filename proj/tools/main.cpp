#include <iostream>

#include "fedseq/cli.hpp"

int main(int argc, char** argv) { return fedseq::run_cli(argc, argv, std::cout, std::cerr); }
