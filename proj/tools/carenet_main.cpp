#include "carenet/cli.hpp"

int main(int argc, char** argv) { return carenet::cli_main(argc, argv); }
