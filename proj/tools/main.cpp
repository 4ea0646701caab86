#include <iostream>

#include "advdrive/cli.hpp"

int main(int argc, char** argv) { return advdrive::Dispatch(argc, argv, std::cout, std::cerr); }
