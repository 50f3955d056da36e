#include "footreg/commands.hpp"

int main(int argc, char** argv) { return footreg::run_cli(argc, argv); }
