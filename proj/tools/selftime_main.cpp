#include "selftime/cli.hpp"

int main(int argc, char** argv) { return selftime::cli::dispatch(argc, argv); }
