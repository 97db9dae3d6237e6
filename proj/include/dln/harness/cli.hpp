#pragma once

// Command-line front end. Subcommands: generate, run, solve, diagnose,
// experiment. Exit codes: 0 ok, 1 solver failure, 2 divergence, 3 bad
// configuration or unusable input.

#include <iosfwd>

namespace dln {

int cli_main(int argc, char** argv);
int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace dln
