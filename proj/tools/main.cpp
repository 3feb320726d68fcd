#include "pcreid/cli.hpp"

int main(int argc, char** argv) { return pcreid::cli::dispatch(argc, argv); }
