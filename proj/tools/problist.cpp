#include "problist/cli.hpp"

int main(int argc, char** argv) { return problist::cli::main(argc, argv); }
