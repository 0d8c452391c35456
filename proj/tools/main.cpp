#include "cli.hpp"

int main(int argc, char** argv) { return mgract::cli::run(argc, argv); }
