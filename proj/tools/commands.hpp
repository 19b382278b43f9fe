#pragma once

namespace secord::cli {

// parses argv and runs one subcommand; returns the process exit code
int run(int argc, const char* const* argv);

}  // namespace secord::cli
