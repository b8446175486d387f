#include "dime/cli.hpp"

int main(int argc, char** argv) { return dime::run_cli(argc, argv); }
