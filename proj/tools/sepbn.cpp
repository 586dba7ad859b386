#include "sepbn/commands.hpp"

int main(int argc, char** argv) { return sepbn::run_cli(argc, argv); }
