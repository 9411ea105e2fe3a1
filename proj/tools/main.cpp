#include <iostream>

#include "gazeseg/cli.hpp"

int main(int argc, char** argv) { return gazeseg::dispatch(argc, argv, std::cout, std::cerr); }
