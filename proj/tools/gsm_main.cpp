#include "gsm/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
    return gsm::cli::run(argc, argv, std::cout, std::cerr);
}
