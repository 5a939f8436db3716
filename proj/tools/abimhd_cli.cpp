#include <abimhd/cli.hpp>

int main(int argc, char** argv) { return abimhd::run_cli(argc, argv); }
