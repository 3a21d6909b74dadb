#include "srtune/cli.hpp"

int main(int argc, char** argv) { return srtune::run_cli(argc, argv); }
