#include <string>
#include <vector>

#include "liprf/cli.hpp"

int main(int argc, char** argv) {
    liprf::retain_heap();
    std::vector<std::string> args(argv + 1, argv + argc);
    return liprf::cli::run(args);
}
