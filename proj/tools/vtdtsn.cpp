#include <iostream>

#include "vtdtsn/commands.hpp"

int main(int argc, char** argv) { return vtdtsn::run_cli(argc, argv, std::cout, std::cerr); }
