#include "treevae/cli.hpp"

int main(int argc, char** argv) { return treevae::cli::run_cli(argc, argv); }
