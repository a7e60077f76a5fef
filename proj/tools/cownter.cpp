#include "cownter/cli.hpp"

int main(int argc, char** argv) { return cownter::run_cli(argc, argv); }
