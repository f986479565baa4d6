#include "tapcast/cli/app.hpp"

int main(int argc, char** argv) { return tapcast::cli::main(argc, argv); }
