#include "molepair/cli.hpp"

int main(int argc, char** argv) { return molepair::cli::run_cli(argc, argv); }
