#include "qdial/cli.hpp"

int main(int argc, char** argv) { return qdial::cli::run(argc, argv); }
