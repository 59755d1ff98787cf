#include "wigraph/cli.hpp"

int main(int argc, char** argv) { return wigraph::run_cli(argc, argv); }
