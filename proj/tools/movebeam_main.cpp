#include "movebeam/cli.hpp"

int main(int argc, char** argv) { return movebeam::cli::run(argc, argv); }
