#include "gmq/cli.hpp"

int main(int argc, char** argv) { return gmq::cli::main(argc, argv); }
