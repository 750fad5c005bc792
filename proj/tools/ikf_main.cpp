#include "ikf/cli.hpp"

int main(int argc, char** argv) { return ikf::cli::run_main(argc, argv); }
