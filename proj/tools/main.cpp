#include "ocdcvae/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return ocdcvae::run_cli(argc, argv, std::cout, std::cerr); }
