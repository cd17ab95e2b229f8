#include <vector>

#include "kirag/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return kirag::run_cli(args);
}
