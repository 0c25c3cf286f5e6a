#include <vector>

#include "odesurv/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return odesurv::run_cli(args);
}
