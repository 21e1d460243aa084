#include <iostream>

#include "ehrq/cli.hpp"

int main(int argc, char** argv) { return ehrq::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr); }
