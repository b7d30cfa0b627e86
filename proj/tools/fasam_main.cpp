#include "fasam/cli.hpp"

int main(int argc, char** argv) { return fasam::cli_main(argc, argv); }
