#include "ipcwi/cli.hpp"

int main(int argc, char** argv) { return ipcwi::run_cli(argc, argv); }
