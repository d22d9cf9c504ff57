#include "erg/cli.hpp"

int main(int argc, char** argv) { return erg::cli::dispatch(argc, argv); }
