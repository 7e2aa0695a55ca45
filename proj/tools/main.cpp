#include "cmde/cli.hpp"

int main(int argc, char** argv) { return cmde::cli::main(argc, argv); }
