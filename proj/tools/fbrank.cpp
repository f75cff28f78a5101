#include "fbrank_cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return fbrank::cli::run_cli(std::move(args));
}
