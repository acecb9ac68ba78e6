#include "bspft/cli.hpp"

int main(int argc, char** argv) { return bspft::cli_main(argc, argv); }
