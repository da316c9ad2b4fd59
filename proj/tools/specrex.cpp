#include "specrex/cli.hpp"

int main(int argc, char** argv) { return specrex::cli::run(argc, argv); }
