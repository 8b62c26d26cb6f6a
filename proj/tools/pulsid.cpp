#include "pulsid/cli.hpp"

int main(int argc, char** argv) { return pulsid::cli::run(argc, argv); }
