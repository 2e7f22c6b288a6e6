#include "fmsync/cli.h"

int main(int argc, char** argv) { return fmsync::cli_main(argc, argv); }
