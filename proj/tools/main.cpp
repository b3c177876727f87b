#include "kvqa/cli.hpp"

int main(int argc, char** argv) { return kvqa::cli_main(argc, argv); }
