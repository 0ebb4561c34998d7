#include "diskflow/cli_runner.hpp"

int main(int argc, char** argv) { return diskflow::cli_main(argc, argv); }
