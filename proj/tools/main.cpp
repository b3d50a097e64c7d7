#include "picg/cli.hpp"

int main(int argc, char** argv) { return picg::cli_main(argc, argv); }
