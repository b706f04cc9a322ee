#include "obfmal/cli.hpp"

int main(int argc, char** argv) { return obfmal::run_cli(argc, argv); }
