#include "ddpvf/cli.hpp"

int main(int argc, char** argv) {
    return ddpvf::run_cli(argc, argv);
}
