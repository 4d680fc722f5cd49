#include <string>
#include <vector>

#include "ldae/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return ldae::cli::run(args);
}
