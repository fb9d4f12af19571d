#include "rbound/cli.hpp"

int main(int argc, char** argv) { return rbound::run_cli(argc, argv); }
