#include "byzfl/cli.hpp"

int main(int argc, char** argv) {
    return byzfl::run_cli(argc, argv);
}
