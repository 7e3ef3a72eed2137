#include <iostream>

#include "combnet/cli.hpp"

int main(int argc, char** argv) { return combnet::cli::dispatch(argc, argv, std::cout, std::cerr); }
