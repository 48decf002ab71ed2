#include "fdfo/cli.hpp"

int main(int argc, char** argv) { return fdfo::run_cli(argc, argv); }
