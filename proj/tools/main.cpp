#include "cli.hpp"

int main(int argc, char** argv) { return shardalloc::cli::cli_dispatch(argc, argv); }
