#include "structvar/cli.hpp"

int main(int argc, char** argv) { return structvar::run_cli(argc, argv); }
