#include "cli.hpp"

int main(int argc, char** argv) { return freeprob::cli::run(argc, argv); }
