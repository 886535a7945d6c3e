#include "softpuf/cli.hpp"

int main(int argc, char** argv) { return softpuf::cli::run(argc, argv); }
