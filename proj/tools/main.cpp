#include <string>
#include <vector>

#include "icbs/cli.hpp"

int main(int argc, char** argv) {
    return icbs::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
