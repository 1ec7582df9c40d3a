#include "gausssurf/cli.hpp"

int main(int argc, char** argv) { return gausssurf::run(argc, argv); }
