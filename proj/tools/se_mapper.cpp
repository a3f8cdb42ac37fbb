#include "semap/cli.hpp"

int main(int argc, char** argv) { return semap::cli::run_cli(argc, argv); }
