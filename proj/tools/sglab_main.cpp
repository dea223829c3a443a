#include "sglab/cli.hpp"

int main(int argc, char** argv) { return sglab::cli_main(argc, argv); }
