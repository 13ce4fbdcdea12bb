#include "cli.hpp"

int main(int argc, char** argv) { return pixobj::cli::run(argc, argv); }
