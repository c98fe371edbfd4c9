#include "cli/commands.hpp"

int main(int argc, char** argv) { return tbsc::cli::run(argc, argv); }
