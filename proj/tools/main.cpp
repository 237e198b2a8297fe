#include <vector>

#include "ctha/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return ctha::cli::run(args);
}
