#include "lowmach/cli.hpp"

int main(int argc, char** argv) { return lowmach::cli::run(argc, argv); }
