#include "sosmpc/cli.hpp"

int main(int argc, char** argv) { return sosmpc::cli::main(argc, argv); }
