#include "cli_commands.hpp"

int main(int argc, char** argv) { return heliox::cli::run(argc, argv); }
