#include <iostream>

#include "sqj/cli.hpp"

int main(int argc, char** argv) { return sqj::cli_main(argc, argv, std::cout, std::cerr); }
