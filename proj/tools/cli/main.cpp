#include <iostream>

#include "runner.hpp"

int main(int argc, char** argv) { return misanthrope::cli::main_entry(argc, argv, std::cout, std::cerr); }
