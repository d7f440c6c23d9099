#include "cli.hpp"

int main(int argc, char** argv) { return bfmm::cli::run(argc, argv); }
