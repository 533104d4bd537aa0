#include "ctcbench/cli.hpp"

int main(int argc, char** argv) { return ctcbench::run_cli(argc, argv); }
