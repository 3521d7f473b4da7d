#include "abscribe/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
    return abscribe::run_cli(argc, argv, std::cout, std::cerr);
}
