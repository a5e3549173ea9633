#include "csd/cli.hpp"

int main(int argc, char** argv) { return csd::cli_dispatch(argc, argv); }
