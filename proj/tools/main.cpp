#include "caplf/cli.hpp"

int main(int argc, char** argv) { return caplf::cli_main(argc, argv); }
