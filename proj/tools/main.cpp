#include "commands.hpp"

int main(int argc, char** argv) { return secord::cli::run(argc, argv); }
