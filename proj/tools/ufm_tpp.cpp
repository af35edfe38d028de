#include "ufm/cli.hpp"

int main(int argc, char** argv) { return ufm::cli::run_cli(argc, argv); }
