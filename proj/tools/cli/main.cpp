#include <iostream>

#include "wsens_cli/app.hpp"

int main(int argc, char** argv) { return wsens::cli::run(argc, argv, std::cout, std::cerr); }
