#include <iostream>

#include "rubra/cli.hpp"

int main(int argc, char** argv) {
    return rubra::cli::run(argc, argv, std::cout, std::cerr);
}
