#include "softthink/cli.hpp"

int main(int argc, char** argv) { return softthink::cli_main(argc, argv); }
