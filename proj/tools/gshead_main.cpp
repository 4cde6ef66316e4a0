#include "gshead/cli.hpp"

int main(int argc, char** argv) { return gshead::cli_main(argc, argv); }
