#include "cli.hpp"

int main(int argc, char** argv) { return gzood::cli::run(argc, argv); }
