#include "fedmix/cli.hpp"

#include <iostream>

int main(int argc, char **argv) { return fedmix::cli::run(argc, argv, std::cout, std::cerr); }
