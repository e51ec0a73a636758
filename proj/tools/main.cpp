#include "cli.hpp"

int main(int argc, char** argv) { return conmo::cli::run_cli(argc, argv); }
