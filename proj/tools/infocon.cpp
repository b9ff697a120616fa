#include "infocon/cli.hpp"

int main(int argc, char** argv) { return infocon::cli::run(argc, argv); }
