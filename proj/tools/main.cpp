#include "lapspec/cli.hpp"

int main(int argc, char** argv) { return lapspec::cli::main(argc, argv); }
