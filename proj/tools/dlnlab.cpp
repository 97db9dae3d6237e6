#include "dln/harness/cli.hpp"

int main(int argc, char** argv) { return dln::cli_main(argc, argv); }
