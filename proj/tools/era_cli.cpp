#include "era/cli.hpp"

int main(int argc, char** argv) { return era::cli_main(argc, argv); }
