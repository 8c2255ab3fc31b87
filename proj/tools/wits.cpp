#include "wits/commands.hpp"

int main(int argc, char** argv) { return wits::cli::run_cli(argc, argv); }
