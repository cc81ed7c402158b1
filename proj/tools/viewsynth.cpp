#include <iostream>

#include "viewsynth/cli.hpp"

int main(int argc, char** argv) { return viewsynth::run_cli(argc, argv, std::cout, std::cerr); }
