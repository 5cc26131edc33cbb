#include "sunprobit/cli.hpp"

int main(int argc, char** argv) { return sunprobit::cli::run(argc, argv); }
