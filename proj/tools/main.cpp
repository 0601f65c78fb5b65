#include <iostream>
#include <string>
#include <vector>

#include "s2seval/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return s2seval::cli::run(args, std::cout, std::cerr);
}
