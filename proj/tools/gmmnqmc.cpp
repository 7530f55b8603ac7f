#include "gmmnqmc/cli.hpp"

int main(int argc, char** argv) { return gmmnqmc::cli::run(argc, argv); }
